//! Writes a run directory, then reloads the checkpoint and checks it
//! against the in-memory state.
//!
//! cargo run --release --example checkpoint -- /tmp/d4l_example

use std::path::PathBuf;

use d4l::harness::{execute, ExperimentConfig};
use d4l::saddle::read_checkpoint;

fn main() -> d4l::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("d4l_checkpoint_example"));
    let overrides: Vec<String> = ["iterations=50", "repeats=1", "sampling.batch_size=10", "eval.eval_set_size=64"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let config = ExperimentConfig::from_toml_str("", &overrides)?;
    let outputs = execute(&config, &dir, |line| println!("{line}"))?;
    let restored = read_checkpoint(&dir.join("checkpoint.bin"))?;
    assert_eq!(restored, outputs[0].state);
    println!(
        "checkpoint in {} restores {} agents and {} edge multipliers exactly",
        dir.display(),
        restored.agents.len(),
        restored.duals.len()
    );
    Ok(())
}
