//! Elastic-net coding of one signal, its optimality certificate, and the
//! task-driven dictionary gradient through the code.
//!
//! cargo run --release --example sparse_coding

use d4l::coding::{beta_vector, dict_task_gradient, kkt_residual, Dictionary, ElasticNetParams, SparseCoder};
use d4l::losses::{multinomial_grads, ClassifierParams, OneHot};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> d4l::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dict = Dictionary::random(16, 24, &mut rng);
    let params = ElasticNetParams::new(0.1, 0.01)?;
    let coder = SparseCoder::new(&dict, params)?;

    let x = DVector::from_fn(16, |i, _| ((i as f64) * 0.7).sin());
    let x = &x / x.norm();
    let code = coder.code(&x)?;
    println!("active atoms {:?}", code.active_set);
    println!("signs        {:?}", code.signs);
    println!("KKT residual {:.2e}", kkt_residual(&dict, &x, &code, &params));
    println!("reconstruction error {:.4}", (&x - dict.reconstruct(&code)).norm());

    // Gradient of a classification loss on the code with respect to D.
    let clf = ClassifierParams::pinned(DMatrix::from_element(25, 3, 0.1));
    let g = multinomial_grads(&clf, &code.alpha, &OneHot::new(0, 3)?, 0.0)?;
    let beta = beta_vector(&dict, &code, &g.grad_alpha, &params)?;
    let grad = dict_task_gradient(&dict, &x, &code, &beta.values)?;
    println!("loss {:.4}, |dL/dD| = {:.4}", g.loss, grad.norm());
    Ok(())
}
