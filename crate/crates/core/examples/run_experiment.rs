//! A full simulated run from a config, printing the metric trace. Extra
//! arguments are `key=value` overrides, e.g. `topology.n=10`.
//!
//! cargo run --release --example run_experiment -- iterations=400 topology.kind=\"random\"

use d4l::harness::metrics::{final_decile, mean_of};
use d4l::harness::{run_experiment, ExperimentConfig};

fn main() -> d4l::Result<()> {
    let mut overrides = vec![
        "iterations=300".to_string(),
        "sampling.batch_size=20".to_string(),
        "eval.eval_set_size=128".to_string(),
        "eval.metric_period=30".to_string(),
    ];
    overrides.extend(std::env::args().skip(1));
    let config = ExperimentConfig::from_toml_str("", &overrides)?;
    let out = run_experiment(&config)?;
    println!("{:>5} {:>8} {:>6} {:>9} {:>9} {:>9}", "t", "loss", "acc", "rv_dict", "rv_clf", "gn_mean");
    for r in &out.metrics {
        println!(
            "{:>5} {:>8.4} {:>6.3} {:>9.2e} {:>9.2e} {:>9.4}",
            r.t,
            r.loss,
            r.acc,
            r.rv_dict,
            r.rv_clf,
            r.stationarity.mean()
        );
    }
    let tail = final_decile(&out.metrics, config.iterations);
    println!(
        "final-decile accuracy {:.3}; feasibility violations {}",
        mean_of(tail.iter().copied(), |r| r.acc),
        out.feasibility_violations
    );
    Ok(())
}
