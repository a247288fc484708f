//! Experiment orchestration: configuration, initialization, the simulation
//! loop, metrics, step-size grid search and run directories.

pub mod config;
pub mod metrics;
pub mod output;
pub mod sim;

pub use config::{ExperimentConfig, TopologyKind};
pub use metrics::{relative_variation, MetricRow, RunningAverages, CSV_HEADER};
pub use output::{content_hash, execute, input_hash};
pub use sim::{evaluate_accuracy, init_model, prepare_dataset, run_experiment, InitOutcome, InitSettings, RunOutput, Simulation};

use std::sync::Arc;

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Environment variable capping worker threads (`0` or unset means one per
/// core).
pub const THREADS_ENV: &str = "D4L_THREADS";

/// Runs `f` on a thread pool sized by [`THREADS_ENV`].
pub fn with_thread_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a nonnegative integer, got {v:?}")))?,
        Err(_) => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Outcome of probing one candidate step size.
#[derive(Debug, Clone, PartialEq)]
pub struct GridProbe {
    pub eps0: f64,
    /// Validation loss, or `None` when the probe diverged.
    pub loss: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub chosen: f64,
    pub probes: Vec<GridProbe>,
}

/// Picks the candidate with the lowest finite probe loss; ties go to the
/// smaller step size. A probe diverges if it errors or returns a non-finite
/// loss. Fails only if every candidate diverges.
pub fn select_step_size(candidates: &[f64], mut probe: impl FnMut(f64) -> Result<f64>) -> Result<GridOutcome> {
    if candidates.is_empty() {
        return Err(Error::Config("step-size grid is empty".into()));
    }
    let mut probes = Vec::with_capacity(candidates.len());
    for &eps in candidates {
        let p = match probe(eps) {
            Ok(l) if l.is_finite() => GridProbe {
                eps0: eps,
                loss: Some(l),
                error: None,
            },
            Ok(l) => GridProbe {
                eps0: eps,
                loss: None,
                error: Some(format!("validation loss is {l}")),
            },
            Err(e) => GridProbe {
                eps0: eps,
                loss: None,
                error: Some(e.to_string()),
            },
        };
        probes.push(p);
    }
    let best = probes
        .iter()
        .filter_map(|p| p.loss.map(|l| (l, p.eps0)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    match best {
        Some((_, chosen)) => Ok(GridOutcome { chosen, probes }),
        None => {
            let detail: Vec<String> = probes
                .iter()
                .map(|p| format!("eps0 = {}: {}", p.eps0, p.error.as_deref().unwrap_or("?")))
                .collect();
            Err(Error::Numeric(format!(
                "every step size diverged; try smaller values ({})",
                detail.join("; ")
            )))
        }
    }
}

/// Runs `probe_iters` iterations of `config` with step size `eps0` and
/// returns the network mean loss on the held-out evaluation set.
pub fn probe_step_size(config: &ExperimentConfig, dataset: Arc<Dataset>, eps0: f64, probe_iters: usize) -> Result<f64> {
    let mut cfg = config.clone();
    cfg.iterations = probe_iters;
    cfg.schedule.eps0 = eps0;
    cfg.schedule.t0 = None;
    cfg.eval.metric_period = probe_iters;
    let mut sim = Simulation::new(&cfg, dataset)?;
    while !sim.is_done() {
        sim.step()?;
    }
    Ok(sim.evaluate()?.mean_loss())
}

/// Grid search over `config.grid.eps_list`.
pub fn grid_search(config: &ExperimentConfig) -> Result<GridOutcome> {
    let dataset = Arc::new(prepare_dataset(config)?);
    select_step_size(&config.grid.eps_list, |eps| {
        probe_step_size(config, Arc::clone(&dataset), eps, config.grid.probe_iters)
    })
}
