//! Run directories: metrics CSV, checkpoint, summary JSON.

use std::fs;
use std::path::Path;

use serde_json::json;
use sha2::{Digest, Sha256};

use super::config::{DataSource, ExperimentConfig};
use super::metrics::{final_decile, mean_of, mean_rows, metrics_csv, MetricRow};
use super::sim::{prepare_dataset, RunOutput, Simulation};
use crate::data::read_manifest;
use crate::error::{Error, Result};
use crate::saddle::write_checkpoint;

/// Git-style blob hash: SHA-256 of `"blob <len>\0"` followed by the bytes.
pub fn content_hash(data: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", data.len()).as_bytes());
    h.update(data);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash over the resolved config and, for manifest data, the manifest and
/// every image it lists.
pub fn input_hash(config: &ExperimentConfig) -> Result<String> {
    let mut bytes = config.to_toml().into_bytes();
    if config.data.source == DataSource::Manifest {
        if let Some(path) = &config.data.manifest {
            bytes.extend(fs::read(path).map_err(|e| Error::io(path, e))?);
            for entry in read_manifest(path)? {
                bytes.extend(fs::read(&entry.path).map_err(|e| Error::io(&entry.path, e))?);
            }
        }
    }
    Ok(content_hash(&bytes))
}

fn row_json(r: &MetricRow) -> serde_json::Value {
    json!({
        "t": r.t,
        "loss": r.loss,
        "acc": r.acc,
        "rv_dict": r.rv_dict,
        "rv_clf": r.rv_clf,
        "gn_dict": r.stationarity.primal_dict_norm,
        "gn_clf": r.stationarity.primal_clf_norm,
        "gn_lam": r.stationarity.dual_lambda_norm,
        "gn_nu": r.stationarity.dual_nu_norm,
    })
}

fn run_summary(config: &ExperimentConfig, out: &RunOutput) -> serde_json::Value {
    let last = out.metrics.last();
    let tail = final_decile(&out.metrics, config.iterations);
    json!({
        "seed": config.seed,
        "iterations": config.iterations,
        "final": last.map(row_json),
        "final_decile": {
            "loss": mean_of(tail.iter().copied(), |r| r.loss),
            "acc": mean_of(tail.iter().copied(), |r| r.acc),
            "rv_dict": mean_of(tail.iter().copied(), |r| r.rv_dict),
            "rv_clf": mean_of(tail.iter().copied(), |r| r.rv_clf),
        },
        "topology": {
            "n": out.topology.n_nodes(),
            "directed_edges": out.topology.n_edges(),
            "diameter": out.topology.diameter(),
        },
        "feasibility_violations": out.feasibility_violations,
        "stabilized_samples": out.stabilized_samples,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `metrics.csv`, `checkpoint.bin` and `topology.json` for one run.
pub fn write_run_files(dir: &Path, out: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_text(&dir.join("metrics.csv"), &metrics_csv(&out.metrics))?;
    write_checkpoint(&dir.join("checkpoint.bin"), &out.state)?;
    write_text(&dir.join("topology.json"), &(out.topology.to_json() + "\n"))
}

/// Runs every repeat of `config` (seeds `seed`, `seed + 1`, ...) and writes
/// the results under `out_dir`. A single repeat writes straight into
/// `out_dir`; several repeats go to `run_<r>/` with `metrics_mean.csv`
/// alongside. `progress` receives one line per finished run.
pub fn execute(config: &ExperimentConfig, out_dir: &Path, mut progress: impl FnMut(&str)) -> Result<Vec<RunOutput>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let hash = input_hash(config)?;
    let mut outputs = Vec::with_capacity(config.repeats);
    let mut summaries = Vec::with_capacity(config.repeats);
    let mut dataset = None;
    for r in 0..config.repeats {
        let mut cfg = config.clone();
        cfg.seed = config.seed.wrapping_add(r as u64);
        // Repeats with a pinned data seed share one dataset.
        let ds = match (&dataset, config.data.seed.is_some()) {
            (Some(ds), true) => std::sync::Arc::clone(ds),
            _ => {
                let ds = std::sync::Arc::new(prepare_dataset(&cfg)?);
                dataset = Some(std::sync::Arc::clone(&ds));
                ds
            }
        };
        let out = Simulation::new(&cfg, ds)?.run()?;
        let dir = if config.repeats == 1 {
            out_dir.to_path_buf()
        } else {
            out_dir.join(format!("run_{r}"))
        };
        write_run_files(&dir, &out)?;
        progress(&format!(
            "run {}/{} (seed {}): final acc {:.4}, feasibility violations {}",
            r + 1,
            config.repeats,
            cfg.seed,
            out.metrics.last().map_or(f64::NAN, |m| m.acc),
            out.feasibility_violations
        ));
        summaries.push(run_summary(&cfg, &out));
        outputs.push(out);
    }
    let mut summary = json!({
        "config": serde_json::to_value(config).expect("config serializes"),
        "input_hash": hash,
        "runs": summaries,
    });
    if config.repeats > 1 {
        let runs: Vec<Vec<MetricRow>> = outputs.iter().map(|o| o.metrics.clone()).collect();
        let mean = mean_rows(&runs)?;
        write_text(&out_dir.join("metrics_mean.csv"), &metrics_csv(&mean))?;
        summary["mean_final"] = mean.last().map(row_json).into();
    }
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    write_text(&out_dir.join("summary.json"), &text)?;
    Ok(outputs)
}
