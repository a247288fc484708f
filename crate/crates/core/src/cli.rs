//! Command-line front end: `run`, `grid`, `build-corpus` and `inspect`.
//!
//! Exit codes: 0 on success, 2 for invalid configuration or usage, 1 for
//! runtime failures. Errors go to stderr as one JSON object; progress goes
//! to stdout.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::data::{index_manifest, write_synthetic_corpus};
use crate::error::{Error, Result};
use crate::harness::config::DataSource;
use crate::harness::{execute, grid_search, with_thread_pool, ExperimentConfig};
use crate::saddle::read_checkpoint;

#[derive(Debug, Parser)]
#[command(name = "d4l", version, about = "Decentralized discriminative dictionary learning simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment and write metrics.csv, checkpoint.bin and summary.json.
    Run(CommonArgs),
    /// Pick eps0 from the config's grid by short probe runs.
    Grid(GridArgs),
    /// Write a corpus directory (images, manifest.json, patches.json).
    BuildCorpus(CommonArgs),
    /// Print topology diagnostics for a config, or summarize a checkpoint.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dotted-path override, e.g. `topology.n=10`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, default_value = "d4l_out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub repeats: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated candidates; overrides `grid.eps_list`.
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    /// Overrides `grid.probe_iters`.
    #[arg(long)]
    pub probe_iters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Summarize this checkpoint instead of the config's topology.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

fn load_config(args: &CommonArgs) -> Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path, &args.overrides)?,
        None => ExperimentConfig::from_toml_str("", &args.overrides)?,
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(r) = args.repeats {
        config.repeats = r;
    }
    config.validate()?;
    Ok(config)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let text = serde_json::to_string_pretty(value).expect("json serializes") + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_run(args: &CommonArgs) -> Result<()> {
    let config = load_config(args)?;
    let out = &args.out;
    with_thread_pool(|| execute(&config, out, |line| println!("{line}")))??;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_grid(args: &GridArgs) -> Result<()> {
    let mut config = load_config(&args.common)?;
    if let Some(eps) = &args.eps {
        config.grid.eps_list = eps.clone();
    }
    if let Some(p) = args.probe_iters {
        config.grid.probe_iters = p;
    }
    config.validate()?;
    let outcome = with_thread_pool(|| grid_search(&config))??;
    for p in &outcome.probes {
        match (p.loss, &p.error) {
            (Some(l), _) => println!("eps0 = {}: validation loss {l}", p.eps0),
            (None, e) => println!("eps0 = {}: diverged ({})", p.eps0, e.as_deref().unwrap_or("")),
        }
    }
    println!("chosen eps0 = {}", outcome.chosen);
    let probes: Vec<_> = outcome
        .probes
        .iter()
        .map(|p| json!({"eps0": p.eps0, "loss": p.loss, "error": p.error}))
        .collect();
    write_json(
        &args.common.out.join("grid.json"),
        &json!({"chosen": outcome.chosen, "probe_iters": config.grid.probe_iters, "probes": probes}),
    )
}

fn cmd_build_corpus(args: &CommonArgs) -> Result<()> {
    let config = load_config(args)?;
    let stride = config.data.stride;
    let index = match config.data.source {
        DataSource::Synthetic => write_synthetic_corpus(&args.out, &config.data.synthetic, stride, config.data_seed())?,
        DataSource::Manifest => {
            let manifest = config
                .data
                .manifest
                .as_ref()
                .ok_or_else(|| Error::Config("data.manifest is not set".into()))?;
            index_manifest(manifest, &args.out, stride)?
        }
    };
    println!("wrote {} patches to {}", index.len(), args.out.display());
    Ok(())
}

fn cmd_inspect(args: &InspectArgs) -> Result<()> {
    if let Some(path) = &args.checkpoint {
        let state = read_checkpoint(path)?;
        let first = &state.agents[0];
        let report = json!({
            "agents": state.agents.len(),
            "directed_edges": state.duals.len(),
            "signal_dim": first.dict.signal_dim(),
            "atoms": first.dict.n_atoms(),
            "classes": first.clf.n_classes(),
            "max_atom_norm": state.agents.iter().map(|a| a.dict.max_atom_norm()).fold(0.0, f64::max),
            "max_classifier_norm": state.agents.iter().map(|a| a.clf.weights().norm()).fold(0.0, f64::max),
        });
        println!("{}", serde_json::to_string_pretty(&report).unwrap());
        return Ok(());
    }
    let config = load_config(&args.common)?;
    let topo = config.build_topology()?;
    let mut degrees = std::collections::BTreeMap::new();
    for i in 0..topo.n_nodes() {
        *degrees.entry(topo.degree(i)).or_insert(0usize) += 1;
    }
    let spectral = topo.spectral_bounds(1).ok();
    let report = json!({
        "nodes": topo.n_nodes(),
        "directed_edges": topo.n_edges(),
        "connected": topo.is_connected(),
        "diameter": topo.diameter(),
        "degree_histogram": degrees.iter().map(|(d, c)| json!([d, c])).collect::<Vec<_>>(),
        "gamma": spectral.map(|s| s.0),
        "Gamma": spectral.map(|s| s.1),
        "schedule": {"eps0": config.schedule.eps0, "t0": config.schedule()?.t0},
    });
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    Ok(())
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        _ => 1,
    }
}

fn report_error(err: &Error) {
    let report = json!({
        "error": err.kind(),
        "message": err.to_string(),
        "iteration": err.iteration(),
    });
    eprintln!("{report}");
}

/// Parses `args` (program name first) and runs the subcommand; returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Grid(a) => cmd_grid(a),
        Command::BuildCorpus(a) => cmd_build_corpus(a),
        Command::Inspect(a) => cmd_inspect(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            report_error(&e);
            exit_code(&e)
        }
    }
}
