//! Multinomial and binary logistic losses with their gradients.
//!
//! cargo run --release --example classifier_losses

use d4l::losses::{binary_logistic_grads, binary_logistic_loss, multinomial_grads, predict, ClassifierParams, OneHot};
use nalgebra::{DMatrix, DVector};

fn main() -> d4l::Result<()> {
    // Three atoms plus a bias row, four classes; the last column is pinned
    // to zero so the parametrization is identifiable.
    let w = ClassifierParams::pinned(DMatrix::from_row_slice(
        4,
        4,
        &[
            1.0, -0.5, 0.2, 0.0, //
            0.0, 1.5, -0.3, 0.0, //
            -1.0, 0.0, 0.8, 0.0, //
            0.1, 0.1, 0.1, 0.0,
        ],
    ));
    let alpha = DVector::from_vec(vec![0.9, -0.2, 0.1]);
    println!("scores {:?}", w.scores(&alpha).as_slice());
    println!("predicted class {}", predict(&w, &alpha));
    for class in 0..4 {
        let g = multinomial_grads(&w, &alpha, &OneHot::new(class, 4)?, 1e-9)?;
        println!("class {class}: loss {:.4}, |grad_w| {:.4}, grad_alpha {:?}", g.loss, g.grad_w.norm(), g.grad_alpha.as_slice());
    }

    let wb = DVector::from_vec(vec![1.0, -0.5, 0.2, 0.1]);
    for y in [1, -1] {
        let (gw, ga) = binary_logistic_grads(&wb, &alpha, y);
        println!(
            "binary y={y:+}: loss {:.4}, grad_w {:?}, grad_alpha {:?}",
            binary_logistic_loss(&wb, &alpha, y),
            gw.as_slice(),
            ga.as_slice()
        );
    }
    Ok(())
}
