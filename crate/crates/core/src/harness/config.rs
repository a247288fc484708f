//! Experiment configuration (TOML) with dotted-path overrides.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coding::ElasticNetParams;
use crate::data::sampling::{derive_seed, SamplingMode};
use crate::data::{SyntheticSpec, DEFAULT_STRIDE};
use crate::error::{Error, Result};
use crate::saddle::{Bounds, StepSchedule};
use crate::topology::{build_cycle, build_grid, build_random, build_small_world, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    /// One agent, no edges.
    Single,
    Cycle,
    Grid,
    Random,
    SmallWorld,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopologyConfig {
    pub kind: TopologyKind,
    pub n: usize,
    pub rho: f64,
    /// Defaults to a stream derived from the experiment seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            kind: TopologyKind::Cycle,
            n: 5,
            rho: 0.2,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Number of atoms.
    pub k: usize,
    pub zeta1: f64,
    pub zeta2: f64,
    pub xi: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            k: 32,
            zeta1: 0.125,
            zeta2: 0.0,
            xi: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub eps0: f64,
    /// End of the constant phase; defaults to half the iterations.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t0: Option<usize>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig { eps0: 0.05, t0: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub mode: SamplingMode,
    pub batch_size: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            mode: SamplingMode::Complete,
            batch_size: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    Manifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    pub synthetic: SyntheticSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    pub stride: usize,
    /// Share of unsplit manifest patches held out for evaluation.
    pub eval_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: DataSource::Synthetic,
            synthetic: SyntheticSpec::default(),
            manifest: None,
            stride: DEFAULT_STRIDE,
            eval_fraction: 0.2,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub eval_set_size: usize,
    pub metric_period: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            eval_set_size: 512,
            metric_period: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitConfig {
    /// Unsupervised dictionary iterations, then classifier iterations.
    pub iterations: usize,
    /// Patches drawn from the training corpus for initialization.
    pub set_size: usize,
    /// Patches per unsupervised dictionary step.
    pub batch_size: usize,
    /// Defaults to the main schedule's `eps0`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps0: Option<f64>,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            iterations: 200,
            set_size: 200,
            batch_size: 10,
            eps0: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_nu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub eps_list: Vec<f64>,
    pub probe_iters: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            eps_list: vec![0.0125, 0.025, 0.05, 0.1],
            probe_iters: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Total iterations `T`.
    pub iterations: usize,
    pub repeats: usize,
    /// Elementwise clip applied to stochastic primal gradients.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_eta: Option<f64>,
    /// Fill the `wall_ms` metrics column; off keeps metrics byte-reproducible.
    pub record_wall_time: bool,
    pub topology: TopologyConfig,
    pub model: ModelConfig,
    pub schedule: ScheduleConfig,
    pub sampling: SamplingConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
    pub init: InitConfig,
    pub bounds: BoundsConfig,
    pub grid: GridConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            iterations: 2000,
            repeats: 3,
            clip_eta: None,
            record_wall_time: false,
            topology: TopologyConfig::default(),
            model: ModelConfig::default(),
            schedule: ScheduleConfig::default(),
            sampling: SamplingConfig::default(),
            data: DataConfig::default(),
            eval: EvalConfig::default(),
            init: InitConfig::default(),
            bounds: BoundsConfig::default(),
            grid: GridConfig::default(),
        }
    }
}

// Seed streams derived from the experiment seed.
const STREAM_TOPOLOGY: u64 = 1;
const STREAM_DATA: u64 = 2;
const STREAM_INIT: u64 = 3;
const STREAM_SAMPLING: u64 = 4;
const STREAM_POLICY: u64 = 5;
const STREAM_EVAL: u64 = 6;

impl ExperimentConfig {
    /// Parses TOML text, applies `key=value` overrides, and validates.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        let config: ExperimentConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file. A relative manifest path is resolved against the
    /// config file's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut config = Self::from_toml_str(&text, overrides)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(m) = &config.data.manifest {
            if m.is_relative() {
                config.data.manifest = Some(path.parent().unwrap_or(Path::new("")).join(m));
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |msg: String| Err(Error::Config(msg));
        if self.iterations == 0 {
            return cfg_err("iterations must be positive".into());
        }
        if self.repeats == 0 {
            return cfg_err("repeats must be positive".into());
        }
        if self.topology.n == 0 {
            return cfg_err("topology.n must be positive".into());
        }
        if self.topology.kind == TopologyKind::Single && self.topology.n != 1 {
            return cfg_err("a single-agent topology needs topology.n = 1".into());
        }
        if self.topology.kind != TopologyKind::Single && self.topology.n < 2 {
            return cfg_err(format!("a {:?} topology needs topology.n >= 2", self.topology.kind));
        }
        let rho = self.topology.rho;
        if matches!(self.topology.kind, TopologyKind::Random | TopologyKind::SmallWorld) && !(rho > 0.0 && rho <= 1.0) {
            return cfg_err(format!("topology.rho must lie in (0, 1], got {rho}"));
        }
        if self.model.k == 0 {
            return cfg_err("model.k must be positive".into());
        }
        self.elastic_net()?;
        if !(self.model.xi >= 0.0 && self.model.xi.is_finite()) {
            return cfg_err(format!("model.xi must be >= 0, got {}", self.model.xi));
        }
        self.schedule()?;
        if let Some(eta) = self.clip_eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return cfg_err(format!("clip_eta must be positive, got {eta}"));
            }
        }
        if self.sampling.batch_size == 0 {
            return cfg_err("sampling.batch_size must be positive".into());
        }
        if self.eval.eval_set_size == 0 || self.eval.metric_period == 0 {
            return cfg_err("eval.eval_set_size and eval.metric_period must be positive".into());
        }
        if self.data.stride == 0 {
            return cfg_err("data.stride must be positive".into());
        }
        match self.data.source {
            DataSource::Synthetic => self.data.synthetic.validate()?,
            DataSource::Manifest if self.data.manifest.is_none() => {
                return cfg_err("data.source = \"manifest\" needs data.manifest".into())
            }
            DataSource::Manifest => {}
        }
        if self.init.set_size == 0 || self.init.batch_size == 0 {
            return cfg_err("init.set_size and init.batch_size must be positive".into());
        }
        if let Some(e) = self.init.eps0 {
            StepSchedule::new(e, 1)?;
        }
        self.bounds()?;
        if self.grid.eps_list.is_empty() || self.grid.probe_iters == 0 {
            return cfg_err("grid.eps_list must be nonempty and grid.probe_iters positive".into());
        }
        Ok(())
    }

    pub fn elastic_net(&self) -> Result<ElasticNetParams> {
        ElasticNetParams::new(self.model.zeta1, self.model.zeta2).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn schedule(&self) -> Result<StepSchedule> {
        let t0 = self.schedule.t0.unwrap_or((self.iterations / 2).max(1));
        if t0 > self.iterations {
            return Err(Error::Config(format!(
                "schedule.t0 = {t0} exceeds iterations = {}",
                self.iterations
            )));
        }
        StepSchedule::new(self.schedule.eps0, t0)
    }

    pub fn n_classes(&self) -> Option<usize> {
        match self.data.source {
            DataSource::Synthetic => Some(self.data.synthetic.n_classes),
            DataSource::Manifest => None,
        }
    }

    pub fn bounds_for(&self, n_classes: usize) -> Bounds {
        let d = Bounds::defaults(crate::data::patch::SIGNAL_DIM, self.model.k, n_classes);
        Bounds {
            k_w: self.bounds.k_w.unwrap_or(d.k_w),
            k_lambda: self.bounds.k_lambda.unwrap_or(d.k_lambda),
            k_nu: self.bounds.k_nu.unwrap_or(d.k_nu),
        }
    }

    fn bounds(&self) -> Result<()> {
        self.bounds_for(2).validate()
    }

    pub fn build_topology(&self) -> Result<Topology> {
        let t = &self.topology;
        let seed = self.topology_seed();
        match t.kind {
            TopologyKind::Single => Ok(Topology::single()),
            TopologyKind::Cycle => build_cycle(t.n),
            TopologyKind::Grid => build_grid(t.n),
            TopologyKind::Random => build_random(t.n, t.rho, seed),
            TopologyKind::SmallWorld => build_small_world(t.n, t.rho, seed),
        }
    }

    pub fn topology_seed(&self) -> u64 {
        self.topology.seed.unwrap_or_else(|| derive_seed(self.seed, STREAM_TOPOLOGY))
    }

    pub fn data_seed(&self) -> u64 {
        self.data.seed.unwrap_or_else(|| derive_seed(self.seed, STREAM_DATA))
    }

    pub fn init_seed(&self) -> u64 {
        derive_seed(self.seed, STREAM_INIT)
    }

    pub fn sampling_seed(&self) -> u64 {
        derive_seed(self.seed, STREAM_SAMPLING)
    }

    pub fn policy_seed(&self) -> u64 {
        derive_seed(self.seed, STREAM_POLICY)
    }

    pub fn eval_seed(&self) -> u64 {
        derive_seed(self.data_seed(), STREAM_EVAL)
    }
}

/// Sets `a.b.c = value` in a TOML table. The value is parsed as a TOML
/// literal when possible and taken as a bare string otherwise.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() {
        return Err(Error::Config(format!("override {assignment:?} has an empty key")));
    }
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key}: {part} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = ExperimentConfig::from_toml_str("", &[]).unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.schedule().unwrap().t0, 1000);
        assert_eq!(c.grid.eps_list, vec![0.0125, 0.025, 0.05, 0.1]);
    }

    #[test]
    fn overrides_apply() {
        let c = ExperimentConfig::from_toml_str(
            "[topology]\nkind = \"grid\"\n",
            &["topology.kind=cycle".into(), "topology.n=7".into(), "model.zeta1 = 0.2".into()],
        )
        .unwrap();
        assert_eq!(c.topology.kind, TopologyKind::Cycle);
        assert_eq!(c.topology.n, 7);
        assert_eq!(c.model.zeta1, 0.2);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            ExperimentConfig::from_toml_str("bogus = 1", &[]),
            Err(Error::Config(_))
        ));
        assert!(ExperimentConfig::from_toml_str("", &["model.kk=3".into()]).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(ExperimentConfig::from_toml_str("iterations = 10\n[schedule]\nt0 = 20\n", &[]).is_err());
        assert!(ExperimentConfig::from_toml_str("[sampling]\nbatch_size = 0\n", &[]).is_err());
        assert!(ExperimentConfig::from_toml_str("[topology]\nkind = \"single\"\nn = 3\n", &[]).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut c = ExperimentConfig::default();
        c.clip_eta = Some(0.25);
        c.topology.seed = Some(4);
        let back = ExperimentConfig::from_toml_str(&c.to_toml(), &[]).unwrap();
        assert_eq!(back, c);
    }
}
