//! Picks the initial step size by short probe runs.
//!
//! cargo run --release --example grid_search

use d4l::harness::{grid_search, ExperimentConfig};

fn main() -> d4l::Result<()> {
    let overrides: Vec<String> = [
        "sampling.batch_size=10",
        "eval.eval_set_size=64",
        "grid.probe_iters=60",
        "grid.eps_list=[0.0125, 0.05, 0.2]",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let config = ExperimentConfig::from_toml_str("", &overrides)?;
    let outcome = grid_search(&config)?;
    for p in &outcome.probes {
        match p.loss {
            Some(l) => println!("eps0 = {:<7} validation loss {l:.4}", p.eps0),
            None => println!("eps0 = {:<7} diverged: {}", p.eps0, p.error.as_deref().unwrap_or("")),
        }
    }
    println!("chosen eps0 = {}", outcome.chosen);
    Ok(())
}
