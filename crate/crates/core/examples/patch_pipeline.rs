//! Synthetic textures to normalized patches to aggregated codes, and the
//! per-agent sampling policies that draw from them.
//!
//! cargo run --release --example patch_pipeline

use d4l::coding::{Dictionary, ElasticNetParams};
use d4l::data::patch::{aggregate_code, SIGNAL_DIM};
use d4l::data::sampling::{draw_minibatch, SamplingPolicy};
use d4l::data::{build_synthetic, SyntheticSpec, DEFAULT_STRIDE};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> d4l::Result<()> {
    let spec = SyntheticSpec {
        n_classes: 4,
        ..SyntheticSpec::default()
    };
    let data = build_synthetic(&spec, DEFAULT_STRIDE, 42)?;
    println!("{} training patches, {} held-out patches", data.train.len(), data.eval_pool.len());
    for c in 0..data.n_classes() {
        println!("  class {c}: {} patches", data.train.class(c).len());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let dict = Dictionary::random(SIGNAL_DIM, 32, &mut rng);
    let params = ElasticNetParams::new(0.125, 0.0)?;
    let sample = &data.train.class(0)[0];
    let alpha = aggregate_code(&dict, &sample.sample, &params)?;
    let nonzero = alpha.iter().filter(|&&v| v != 0.0).count();
    println!("aggregated code of one patch: {nonzero}/32 nonzero, l1 = {:.3}", alpha.lp_norm(1));

    let policy = SamplingPolicy::incomplete(5, 4, 8, &mut rng)?;
    for (agent, labels) in policy.labels_per_agent.iter().enumerate() {
        let batch = draw_minibatch(&policy, agent, &data.train, &mut rng)?;
        let drawn: Vec<usize> = batch.iter().map(|p| p.label).collect();
        println!("agent {agent} sees labels {labels:?}, drew {drawn:?}");
    }
    Ok(())
}
