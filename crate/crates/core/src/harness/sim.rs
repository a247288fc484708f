//! Initialization and the bulk-synchronous simulation loop.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{DataSource, ExperimentConfig};
use super::metrics::{AgentMetrics, MetricRow, RunningAverages};
use crate::coding::{objective, Dictionary, ElasticNetParams, SparseCoder};
use crate::data::patch::{LabeledPatch, SIGNAL_DIM};
use crate::data::sampling::{agent_rng, draw_minibatch, SamplingMode, SamplingPolicy};
use crate::data::{build_from_manifest, build_synthetic, read_manifest, select_eval_set, Dataset};
use crate::error::{Error, Result};
use crate::losses::{multinomial_grads, predict, ClassifierParams, OneHot};
use crate::saddle::{
    aggregate_codes, minibatch_gradient, project_dictionary, project_frobenius_ball, stationarity_report, AgentGradient,
    AgentState, Bounds, LossParams, NetworkState, StepSchedule,
};
use crate::topology::Topology;

/// Builds the dataset described by the config's `[data]` section.
pub fn prepare_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    let d = &config.data;
    match d.source {
        DataSource::Synthetic => build_synthetic(&d.synthetic, d.stride, config.data_seed()),
        DataSource::Manifest => {
            let path = d
                .manifest
                .as_ref()
                .ok_or_else(|| Error::Config("data.manifest is not set".into()))?;
            let entries = read_manifest(path)?;
            build_from_manifest(&entries, d.stride, d.eval_fraction, config.data_seed())
        }
    }
}

/// Result of [`init_model`].
#[derive(Debug, Clone, PartialEq)]
pub struct InitOutcome {
    pub state: AgentState,
    /// Mean coding objective of each unsupervised step's batch, measured
    /// before the step.
    pub recon_losses: Vec<f64>,
    /// Mean multinomial loss over the init set before each classifier step.
    pub clf_losses: Vec<f64>,
}

/// Settings of [`init_model`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitSettings {
    pub k: usize,
    pub n_classes: usize,
    pub coding: ElasticNetParams,
    pub xi: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub eps0: f64,
    pub k_w: f64,
}

/// Shared starting point for every agent.
///
/// The dictionary starts from Gaussian unit atoms and takes `iterations`
/// projected stochastic steps on the reconstruction objective (the code is
/// held fixed, so the step direction is `-(x - D a) a^T`). The classifier
/// then takes `iterations` projected full-batch gradient steps of
/// multinomial regression on the aggregated codes of `init_set`.
pub fn init_model(settings: &InitSettings, init_set: &[LabeledPatch], rng: &mut impl Rng) -> Result<InitOutcome> {
    if init_set.is_empty() {
        return Err(Error::Data("initialization set is empty".into()));
    }
    let schedule = StepSchedule::new(settings.eps0, (settings.iterations / 2).max(1))?;
    let mut dict = Dictionary::random(SIGNAL_DIM, settings.k, rng);
    let mut recon_losses = Vec::with_capacity(settings.iterations);
    for t in 1..=settings.iterations {
        let eps = schedule.step_size(t)?;
        let coder = SparseCoder::new(&dict, settings.coding)?;
        let mut grad = DMatrix::zeros(SIGNAL_DIM, settings.k);
        let mut loss = 0.0;
        let mut count = 0usize;
        for _ in 0..settings.batch_size {
            let patch = &init_set[rng.random_range(0..init_set.len())];
            for x in &patch.sample.subpatches {
                let code = coder.code(x)?;
                loss += objective(&dict, x, &code.alpha, &settings.coding);
                let residual = x - dict.reconstruct(&code);
                for &l in &code.active_set {
                    grad.column_mut(l).axpy(-code.alpha[l], &residual, 1.0);
                }
                count += 1;
            }
        }
        recon_losses.push(loss / count as f64);
        dict = project_dictionary(dict.atoms() - grad * (eps / count as f64));
    }

    let codes = aggregate_codes(&dict, init_set, &settings.coding)?;
    let labels = init_set
        .iter()
        .map(|p| OneHot::new(p.label, settings.n_classes))
        .collect::<Result<Vec<_>>>()?;
    let mut clf = ClassifierParams::zeros(settings.k, settings.n_classes);
    let mut clf_losses = Vec::with_capacity(settings.iterations);
    let scale = 1.0 / init_set.len() as f64;
    for t in 1..=settings.iterations {
        let eps = schedule.step_size(t)?;
        let mut grad = DMatrix::zeros(settings.k + 1, settings.n_classes);
        let mut loss = 0.0;
        for (a, y) in codes.iter().zip(&labels) {
            let g = multinomial_grads(&clf, a, y, settings.xi)?;
            grad += g.grad_w * scale;
            loss += g.loss * scale;
        }
        clf_losses.push(loss);
        clf = ClassifierParams::pinned(project_frobenius_ball(clf.weights() - grad * eps, settings.k_w));
    }
    Ok(InitOutcome {
        state: AgentState { dict, clf },
        recon_losses,
        clf_losses,
    })
}

/// Fraction of `eval` each agent classifies correctly, averaged over agents.
pub fn evaluate_accuracy(agents: &[AgentState], eval: &[LabeledPatch], coding: &ElasticNetParams) -> Result<f64> {
    if eval.is_empty() {
        return Err(Error::Input("evaluation set is empty".into()));
    }
    if agents.is_empty() {
        return Err(Error::Input("no agents to evaluate".into()));
    }
    let per_agent = agents
        .par_iter()
        .map(|a| {
            let codes = aggregate_codes(&a.dict, eval, coding)?;
            let hits = codes
                .iter()
                .zip(eval)
                .filter(|(c, p)| predict(&a.clf, c) == p.label)
                .count();
            Ok(hits as f64 / eval.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_agent.iter().sum::<f64>() / agents.len() as f64)
}

/// Evaluation-set loss, accuracy and gradient of every agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub per_agent: Vec<AgentMetrics>,
    pub grads: Vec<AgentGradient>,
}

impl Evaluation {
    pub fn mean_loss(&self) -> f64 {
        self.per_agent.iter().map(|a| a.loss).sum::<f64>() / self.per_agent.len() as f64
    }

    pub fn mean_acc(&self) -> f64 {
        self.per_agent.iter().map(|a| a.acc).sum::<f64>() / self.per_agent.len() as f64
    }
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: Vec<MetricRow>,
    pub state: NetworkState,
    pub topology: Topology,
    pub init: InitOutcome,
    /// Set-membership violations summed over every iteration.
    pub feasibility_violations: usize,
    /// Training samples whose coding needed the ridge fallback.
    pub stabilized_samples: usize,
}

/// A D4L run in progress.
pub struct Simulation {
    topo: Topology,
    dataset: Arc<Dataset>,
    eval_set: Vec<LabeledPatch>,
    policy: SamplingPolicy,
    loss: LossParams,
    schedule: StepSchedule,
    bounds: Bounds,
    clip_eta: Option<f64>,
    metric_period: usize,
    record_wall_time: bool,
    iterations: usize,
    state: NetworkState,
    rngs: Vec<ChaCha8Rng>,
    averages: RunningAverages,
    t: usize,
    metrics: Vec<MetricRow>,
    init: InitOutcome,
    feasibility_violations: usize,
    stabilized_samples: usize,
    started: Instant,
}

impl Simulation {
    /// Builds topology, sampling policy, evaluation set and the shared
    /// initialization from `config`, using an already prepared dataset.
    pub fn new(config: &ExperimentConfig, dataset: Arc<Dataset>) -> Result<Self> {
        config.validate()?;
        let topo = config.build_topology()?;
        let n = topo.n_nodes();
        let n_classes = dataset.n_classes();
        if n_classes < 2 {
            return Err(Error::Data(format!("need at least two classes, found {n_classes}")));
        }
        let coding = config.elastic_net()?;
        let bounds = config.bounds_for(n_classes);
        let policy = match config.sampling.mode {
            SamplingMode::Complete => SamplingPolicy::complete(n, n_classes, config.sampling.batch_size),
            SamplingMode::Incomplete => SamplingPolicy::incomplete(
                n,
                n_classes,
                config.sampling.batch_size,
                &mut ChaCha8Rng::seed_from_u64(config.policy_seed()),
            )?,
        };
        policy.validate(n_classes)?;
        let eval_set = select_eval_set(&dataset.eval_pool, n_classes, config.eval.eval_set_size, config.eval_seed())?;

        let mut init_rng = ChaCha8Rng::seed_from_u64(config.init_seed());
        let init_set: Vec<LabeledPatch> = (0..config.init.set_size)
            .map(|_| {
                let label = init_rng.random_range(0..n_classes);
                let pool = dataset.train.class(label);
                if pool.is_empty() {
                    return Err(Error::Data(format!("no training patches for label {label}")));
                }
                Ok(pool[init_rng.random_range(0..pool.len())].clone())
            })
            .collect::<Result<_>>()?;
        let settings = InitSettings {
            k: config.model.k,
            n_classes,
            coding,
            xi: config.model.xi,
            iterations: config.init.iterations,
            batch_size: config.init.batch_size,
            eps0: config.init.eps0.unwrap_or(config.schedule.eps0),
            k_w: bounds.k_w,
        };
        let init = init_model(&settings, &init_set, &mut init_rng)?;
        Self::from_parts(config, topo, dataset, eval_set, policy, init)
    }

    /// Assembles a simulation from explicit parts; every agent starts from
    /// `init.state` with zero multipliers.
    pub fn from_parts(
        config: &ExperimentConfig,
        topo: Topology,
        dataset: Arc<Dataset>,
        eval_set: Vec<LabeledPatch>,
        policy: SamplingPolicy,
        init: InitOutcome,
    ) -> Result<Self> {
        if eval_set.is_empty() {
            return Err(Error::Data("evaluation set is empty".into()));
        }
        let n = topo.n_nodes();
        let state = NetworkState::broadcast(&topo, &init.state);
        let sampling_seed = config.sampling_seed();
        Ok(Simulation {
            averages: RunningAverages::new(&state.agents),
            rngs: (0..n).map(|i| agent_rng(sampling_seed, i)).collect(),
            loss: LossParams {
                coding: config.elastic_net()?,
                xi: config.model.xi,
            },
            schedule: config.schedule()?,
            bounds: config.bounds_for(dataset.n_classes()),
            clip_eta: config.clip_eta,
            metric_period: config.eval.metric_period,
            record_wall_time: config.record_wall_time,
            iterations: config.iterations,
            topo,
            dataset,
            eval_set,
            policy,
            state,
            t: 0,
            metrics: Vec::new(),
            init,
            feasibility_violations: 0,
            stabilized_samples: 0,
            started: Instant::now(),
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn eval_set(&self) -> &[LabeledPatch] {
        &self.eval_set
    }

    pub fn policy(&self) -> &SamplingPolicy {
        &self.policy
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn loss_params(&self) -> &LossParams {
        &self.loss
    }

    pub fn init(&self) -> &InitOutcome {
        &self.init
    }

    /// Iterations completed so far.
    pub fn iteration(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.iterations
    }

    pub fn metrics(&self) -> &[MetricRow] {
        &self.metrics
    }

    pub fn feasibility_violations(&self) -> usize {
        self.feasibility_violations
    }

    /// Loss, accuracy and gradient of every agent on the evaluation set.
    pub fn evaluate(&self) -> Result<Evaluation> {
        let batch: Vec<&LabeledPatch> = self.eval_set.iter().collect();
        let results = self
            .state
            .agents
            .par_iter()
            .map(|a| minibatch_gradient(a, &batch, &self.loss))
            .collect::<Result<Vec<_>>>()?;
        let n_eval = batch.len() as f64;
        Ok(Evaluation {
            per_agent: results
                .iter()
                .map(|r| AgentMetrics {
                    loss: r.loss,
                    acc: r.correct as f64 / n_eval,
                })
                .collect(),
            grads: results.into_iter().map(|r| r.grad).collect(),
        })
    }

    /// Stochastic gradients of every agent on freshly drawn mini-batches.
    fn stochastic_gradients(&mut self) -> Result<Vec<AgentGradient>> {
        let corpus = &self.dataset.train;
        let policy = &self.policy;
        let agents = &self.state.agents;
        let loss = &self.loss;
        let clip = self.clip_eta;
        let results = self
            .rngs
            .par_iter_mut()
            .enumerate()
            .map(|(i, rng)| {
                let batch = draw_minibatch(policy, i, corpus, rng)?;
                let g = minibatch_gradient(&agents[i], &batch, loss)?;
                Ok((g.stabilized, g.grad))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut grads = Vec::with_capacity(results.len());
        for (stabilized, g) in results {
            self.stabilized_samples += stabilized;
            grads.push(match clip {
                Some(eta) => g.clipped(eta),
                None => g,
            });
        }
        Ok(grads)
    }

    /// Runs one iteration; returns the metric row if one was recorded.
    pub fn step(&mut self) -> Result<Option<&MetricRow>> {
        let t = self.t;
        self.step_inner().map_err(|e| e.at_iteration(t))?;
        if self.metrics.last().is_some_and(|r| r.t == t) {
            Ok(self.metrics.last())
        } else {
            Ok(None)
        }
    }

    fn step_inner(&mut self) -> Result<()> {
        if self.is_done() {
            return Err(Error::Input(format!("all {} iterations already ran", self.iterations)));
        }
        let t = self.t;
        let eps = self.schedule.step_size(t + 1)?;
        let grads = self.stochastic_gradients()?;
        let eval = if t % self.metric_period == 0 {
            Some(self.evaluate()?)
        } else {
            None
        };
        let next = self.state.step(&self.topo, &grads, eps, &self.bounds)?;
        self.feasibility_violations += next.feasibility_violations(&self.bounds);
        self.averages.update(&next.agents);
        if let Some(eval) = eval {
            let stationarity = stationarity_report(&self.topo, &self.state, &eval.grads, &next.agents, eps, &self.bounds)?;
            let row = MetricRow {
                t,
                loss: eval.mean_loss(),
                acc: eval.mean_acc(),
                rv_dict: self.averages.rv_dict(),
                rv_clf: self.averages.rv_clf(),
                stationarity,
                wall_ms: if self.record_wall_time {
                    self.started.elapsed().as_millis() as u64
                } else {
                    0
                },
                per_agent: eval.per_agent,
            };
            if !row.is_finite() {
                return Err(Error::Numeric(format!("metrics at t = {t} are not finite")));
            }
            self.metrics.push(row);
        }
        self.state = next;
        self.t += 1;
        Ok(())
    }

    pub fn run(mut self) -> Result<RunOutput> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(RunOutput {
            metrics: self.metrics,
            state: self.state,
            topology: self.topo,
            init: self.init,
            feasibility_violations: self.feasibility_violations,
            stabilized_samples: self.stabilized_samples,
        })
    }
}

/// Prepares data and runs `config` to completion.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    let dataset = Arc::new(prepare_dataset(config)?);
    Simulation::new(config, dataset)?.run()
}
