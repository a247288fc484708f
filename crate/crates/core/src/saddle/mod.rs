//! Block Arrow-Hurwicz saddle-point iteration over a network of agents.
//!
//! Each agent `i` holds a dictionary `D_i`, a classifier `W_i`, and for every
//! outgoing edge `(i, j)` the multipliers `Lambda_ij` and `nu_ij`. One
//! iteration is bulk-synchronous:
//!
//! 1. every agent receives `Lambda_ji`, `nu_ji` from its neighbors and takes a
//!    projected primal descent step on its local Lagrangian;
//! 2. every agent receives its neighbors' new primal variables and takes a
//!    projected dual ascent step on each of its edges.
//!
//! Agents only read immutable snapshots between the two barriers, so the
//! per-agent and per-edge work runs in parallel with results bitwise equal to
//! a sequential sweep.

mod checkpoint;
mod schedule;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use schedule::StepSchedule;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::coding::{accumulate_dict_task_gradient, Dictionary, ElasticNetParams, SparseCoder};
use crate::data::patch::{aggregate_with, LabeledPatch};
use crate::error::{Error, Result};
use crate::losses::{multinomial_grads, predict, ClassifierParams, OneHot};
use crate::topology::Topology;

/// Slack allowed when checking set membership after a projection.
pub const FEASIBILITY_SLACK: f64 = 1e-12;

/// Rescales every column with norm above one back onto the unit sphere.
pub fn project_dictionary(mut atoms: DMatrix<f64>) -> Dictionary {
    for mut col in atoms.column_iter_mut() {
        let norm = col.norm();
        if norm > 1.0 {
            col /= norm;
        }
    }
    Dictionary::from_projected(atoms)
}

/// Euclidean projection onto the Frobenius ball of the given radius.
pub fn project_frobenius_ball(mut x: DMatrix<f64>, radius: f64) -> DMatrix<f64> {
    let norm = x.norm();
    if norm > radius {
        x *= radius / norm;
    }
    x
}

/// Radii of the classifier and multiplier balls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub k_w: f64,
    pub k_lambda: f64,
    pub k_nu: f64,
}

impl Bounds {
    /// `K_w = 1e3`, `K_Lambda = 1e3 sqrt(m k)`, `K_nu = 1e3 sqrt((k+1) C)`.
    pub fn defaults(m: usize, k: usize, n_classes: usize) -> Self {
        Bounds {
            k_w: 1e3,
            k_lambda: 1e3 * ((m * k) as f64).sqrt(),
            k_nu: 1e3 * (((k + 1) * n_classes) as f64).sqrt(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("k_w", self.k_w), ("k_lambda", self.k_lambda), ("k_nu", self.k_nu)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub dict: Dictionary,
    pub clf: ClassifierParams,
}

/// Multipliers held at the tail node of one directed edge.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeDuals {
    pub lambda: DMatrix<f64>,
    pub nu: DMatrix<f64>,
}

/// Stochastic (or evaluation) gradients of one agent's local loss.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentGradient {
    pub dict: DMatrix<f64>,
    pub clf: DMatrix<f64>,
}

impl AgentGradient {
    /// Elementwise clipping to `[-eta, eta]`.
    pub fn clipped(mut self, eta: f64) -> Self {
        self.dict.apply(|v| *v = v.clamp(-eta, eta));
        self.clf.apply(|v| *v = v.clamp(-eta, eta));
        self
    }
}

/// `grad + sum_j (held_ij - received_ji)`. `held` pairs each neighbor with
/// the locally stored multiplier; `inbox` maps the neighbor to what it sent.
fn consensus_direction(
    grad: &DMatrix<f64>,
    held: &[(usize, &DMatrix<f64>)],
    inbox: &BTreeMap<usize, &DMatrix<f64>>,
) -> Result<DMatrix<f64>> {
    let mut dir = grad.clone();
    for &(j, own) in held {
        let received = inbox
            .get(&j)
            .ok_or_else(|| Error::Protocol(format!("no multiplier received from neighbor {j}")))?;
        if own.shape() != grad.shape() || received.shape() != grad.shape() {
            return Err(Error::Shape(format!(
                "multiplier shapes {:?}/{:?} do not match gradient {:?}",
                own.shape(),
                received.shape(),
                grad.shape()
            )));
        }
        dir += own;
        dir -= *received;
    }
    Ok(dir)
}

/// `P_D[D_i - eps (grad + sum_j (Lambda_ij - Lambda_ji))]`.
pub fn primal_step_dict(
    dict: &Dictionary,
    held: &[(usize, &DMatrix<f64>)],
    inbox: &BTreeMap<usize, &DMatrix<f64>>,
    grad: &DMatrix<f64>,
    eps: f64,
) -> Result<Dictionary> {
    if grad.shape() != dict.atoms().shape() {
        return Err(Error::Shape(format!(
            "dictionary gradient {:?} vs dictionary {:?}",
            grad.shape(),
            dict.atoms().shape()
        )));
    }
    let dir = consensus_direction(grad, held, inbox)?;
    Ok(project_dictionary(dict.atoms() - dir * eps))
}

/// `P_W[W_i - eps (grad + sum_j (nu_ij - nu_ji))]` with the pinned column
/// re-zeroed.
pub fn primal_step_clf(
    clf: &ClassifierParams,
    held: &[(usize, &DMatrix<f64>)],
    inbox: &BTreeMap<usize, &DMatrix<f64>>,
    grad: &DMatrix<f64>,
    eps: f64,
    k_w: f64,
) -> Result<ClassifierParams> {
    if grad.shape() != clf.weights().shape() {
        return Err(Error::Shape(format!(
            "classifier gradient {:?} vs classifier {:?}",
            grad.shape(),
            clf.weights().shape()
        )));
    }
    let dir = consensus_direction(grad, held, inbox)?;
    Ok(ClassifierParams::pinned(project_frobenius_ball(
        clf.weights() - dir * eps,
        k_w,
    )))
}

/// Projected dual ascent on edge `(i, j)` using the already advanced primal
/// variables of both endpoints.
pub fn dual_step_edge(
    duals: &EdgeDuals,
    tail: &AgentState,
    head: &AgentState,
    eps: f64,
    bounds: &Bounds,
) -> EdgeDuals {
    let slack_d = tail.dict.atoms() - head.dict.atoms();
    let slack_w = tail.clf.weights() - head.clf.weights();
    EdgeDuals {
        lambda: project_frobenius_ball(&duals.lambda + slack_d * eps, bounds.k_lambda),
        nu: project_frobenius_ball(&duals.nu + slack_w * eps, bounds.k_nu),
    }
}

/// Per-block norms of the projected gradient maps.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StationarityReport {
    pub primal_dict_norm: f64,
    pub primal_clf_norm: f64,
    pub dual_lambda_norm: f64,
    pub dual_nu_norm: f64,
}

impl StationarityReport {
    pub fn mean(&self) -> f64 {
        (self.primal_dict_norm + self.primal_clf_norm + self.dual_lambda_norm + self.dual_nu_norm) / 4.0
    }
}

/// Primal variables of every agent plus multipliers of every directed edge,
/// indexed like [`Topology::edges`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub agents: Vec<AgentState>,
    pub duals: Vec<EdgeDuals>,
}

impl NetworkState {
    /// Every agent starts from `init`; all multipliers start at zero.
    pub fn broadcast(topo: &Topology, init: &AgentState) -> Self {
        let (m, k) = init.dict.atoms().shape();
        let w_shape = init.clf.weights().shape();
        NetworkState {
            agents: vec![init.clone(); topo.n_nodes()],
            duals: vec![
                EdgeDuals {
                    lambda: DMatrix::zeros(m, k),
                    nu: DMatrix::zeros(w_shape.0, w_shape.1),
                };
                topo.n_edges()
            ],
        }
    }

    fn check(&self, topo: &Topology) -> Result<()> {
        if self.agents.len() != topo.n_nodes() || self.duals.len() != topo.n_edges() {
            return Err(Error::Shape(format!(
                "state has {} agents and {} edge duals; topology has {} nodes and {} edges",
                self.agents.len(),
                self.duals.len(),
                topo.n_nodes(),
                topo.n_edges()
            )));
        }
        Ok(())
    }

    /// Phase A for one agent: gather multipliers and take the primal step.
    pub fn primal_update(&self, topo: &Topology, i: usize, grad: &AgentGradient, eps: f64, bounds: &Bounds) -> Result<AgentState> {
        let out = topo.out_edges(i);
        let mut held_l = Vec::with_capacity(out.len());
        let mut held_n = Vec::with_capacity(out.len());
        let mut inbox_l = BTreeMap::new();
        let mut inbox_n = BTreeMap::new();
        for &e in out {
            let j = topo.edges()[e].1;
            let r = topo.reverse_edge(e);
            held_l.push((j, &self.duals[e].lambda));
            held_n.push((j, &self.duals[e].nu));
            inbox_l.insert(j, &self.duals[r].lambda);
            inbox_n.insert(j, &self.duals[r].nu);
        }
        let agent = &self.agents[i];
        Ok(AgentState {
            dict: primal_step_dict(&agent.dict, &held_l, &inbox_l, &grad.dict, eps)?,
            clf: primal_step_clf(&agent.clf, &held_n, &inbox_n, &grad.clf, eps, bounds.k_w)?,
        })
    }

    /// One full iteration: primal step on every agent from the current
    /// multipliers, then dual step on every edge from the new primals.
    pub fn step(&self, topo: &Topology, grads: &[AgentGradient], eps: f64, bounds: &Bounds) -> Result<NetworkState> {
        self.check(topo)?;
        if grads.len() != topo.n_nodes() {
            return Err(Error::Shape(format!(
                "{} gradients for {} agents",
                grads.len(),
                topo.n_nodes()
            )));
        }
        let agents = (0..topo.n_nodes())
            .into_par_iter()
            .map(|i| self.primal_update(topo, i, &grads[i], eps, bounds))
            .collect::<Result<Vec<_>>>()?;
        let duals = topo
            .edges()
            .par_iter()
            .zip(self.duals.par_iter())
            .map(|(&(i, j), d)| dual_step_edge(d, &agents[i], &agents[j], eps, bounds))
            .collect();
        Ok(NetworkState { agents, duals })
    }

    /// Number of set-membership violations: atoms outside the unit ball,
    /// classifiers or multipliers outside their balls, unpinned classifiers,
    /// and non-finite entries.
    pub fn feasibility_violations(&self, bounds: &Bounds) -> usize {
        let mut count = 0;
        for a in &self.agents {
            count += a
                .dict
                .atoms()
                .column_iter()
                .filter(|c| !(c.norm() <= 1.0 + FEASIBILITY_SLACK))
                .count();
            if !(a.clf.weights().norm() <= bounds.k_w * (1.0 + FEASIBILITY_SLACK)) {
                count += 1;
            }
            if !a.clf.is_pinned() {
                count += 1;
            }
        }
        for d in &self.duals {
            if !(d.lambda.norm() <= bounds.k_lambda * (1.0 + FEASIBILITY_SLACK)) {
                count += 1;
            }
            if !(d.nu.norm() <= bounds.k_nu * (1.0 + FEASIBILITY_SLACK)) {
                count += 1;
            }
        }
        count
    }
}

/// Projected-gradient norms of the Lagrangian. Primal blocks use `state`
/// and the supplied gradients; dual blocks use `state`'s multipliers with
/// the primal variables of `next`. Norms are over the stacked network
/// variables.
pub fn stationarity_report(
    topo: &Topology,
    state: &NetworkState,
    grads: &[AgentGradient],
    next: &[AgentState],
    eps: f64,
    bounds: &Bounds,
) -> Result<StationarityReport> {
    state.check(topo)?;
    if grads.len() != topo.n_nodes() || next.len() != topo.n_nodes() {
        return Err(Error::Shape("stationarity needs one gradient and one next state per agent".into()));
    }
    let mut sq = [0.0f64; 4];
    for (i, grad) in grads.iter().enumerate() {
        let stepped = state.primal_update(topo, i, grad, eps, bounds)?;
        let cur = &state.agents[i];
        sq[0] += ((cur.dict.atoms() - stepped.dict.atoms()) / eps).norm_squared();
        sq[1] += ((cur.clf.weights() - stepped.clf.weights()) / eps).norm_squared();
    }
    for (e, &(i, j)) in topo.edges().iter().enumerate() {
        let d = &state.duals[e];
        let stepped = dual_step_edge(d, &next[i], &next[j], eps, bounds);
        sq[2] += ((&stepped.lambda - &d.lambda) / eps).norm_squared();
        sq[3] += ((&stepped.nu - &d.nu) / eps).norm_squared();
    }
    Ok(StationarityReport {
        primal_dict_norm: sq[0].sqrt(),
        primal_clf_norm: sq[1].sqrt(),
        dual_lambda_norm: sq[2].sqrt(),
        dual_nu_norm: sq[3].sqrt(),
    })
}

/// Mean gradients of the local loss over a batch, with the mean loss and the
/// number of correctly classified samples under the current parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradient {
    pub grad: AgentGradient,
    pub loss: f64,
    pub correct: usize,
    /// Samples whose coding or beta solve needed the ridge fallback.
    pub stabilized: usize,
}

/// Loss terms shared by every sample of a batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams {
    pub coding: ElasticNetParams,
    pub xi: f64,
}

/// Per-sample contribution: task-driven dictionary gradient through the
/// aggregated code, and the multinomial classifier gradient.
fn accumulate_sample(
    coder: &SparseCoder<'_>,
    clf: &ClassifierParams,
    sample: &LabeledPatch,
    xi: f64,
    scale: f64,
    acc: &mut BatchGradient,
) -> Result<()> {
    let dict = coder.dictionary();
    let (alpha_tilde, codes) = aggregate_with(coder, &sample.sample)?;
    let y = OneHot::new(sample.label, clf.n_classes())?;
    let g = multinomial_grads(clf, &alpha_tilde, &y, xi)?;
    if predict(clf, &alpha_tilde) == sample.label {
        acc.correct += 1;
    }
    let mut stabilized = false;
    for (x, code) in sample.sample.subpatches.iter().zip(&codes) {
        let beta = coder.beta(code, &g.grad_alpha)?;
        stabilized |= beta.stabilized | code.stabilized;
        accumulate_dict_task_gradient(&mut acc.grad.dict, dict, x, code, &beta.values, scale);
    }
    if stabilized {
        acc.stabilized += 1;
    }
    acc.grad.clf += &g.grad_w * scale;
    acc.loss += scale * g.loss;
    Ok(())
}

/// Arithmetic mean over `batch` of the per-sample gradients.
pub fn minibatch_gradient(agent: &AgentState, batch: &[&LabeledPatch], params: &LossParams) -> Result<BatchGradient> {
    if batch.is_empty() {
        return Err(Error::Input("mini-batch is empty".into()));
    }
    let coder = SparseCoder::new(&agent.dict, params.coding)?;
    let (m, k) = agent.dict.atoms().shape();
    let (wr, wc) = agent.clf.weights().shape();
    if wr != k + 1 {
        return Err(Error::Shape(format!("classifier has {wr} rows for {k} atoms")));
    }
    let mut acc = BatchGradient {
        grad: AgentGradient {
            dict: DMatrix::zeros(m, k),
            clf: DMatrix::zeros(wr, wc),
        },
        loss: 0.0,
        correct: 0,
        stabilized: 0,
    };
    let scale = 1.0 / batch.len() as f64;
    for sample in batch {
        accumulate_sample(&coder, &agent.clf, sample, params.xi, scale, &mut acc)?;
    }
    if !acc.loss.is_finite() {
        return Err(Error::Numeric(format!("mini-batch loss is {}", acc.loss)));
    }
    Ok(acc)
}

/// Aggregated codes of a batch under one dictionary.
pub fn aggregate_codes(dict: &Dictionary, samples: &[LabeledPatch], params: &ElasticNetParams) -> Result<Vec<DVector<f64>>> {
    let coder = SparseCoder::new(dict, *params)?;
    samples
        .iter()
        .map(|s| aggregate_with(&coder, &s.sample).map(|(a, _)| a))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_cycle, build_random};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_agent(rng: &mut ChaCha8Rng, m: usize, k: usize, c: usize) -> AgentState {
        AgentState {
            dict: Dictionary::random(m, k, rng),
            clf: ClassifierParams::pinned(random_matrix(rng, k + 1, c)),
        }
    }

    #[test]
    fn projection_examples() {
        let mut d = DMatrix::zeros(2, 2);
        d[(0, 0)] = 0.5;
        d[(0, 1)] = 2.0;
        let p = project_dictionary(d);
        assert_eq!(p.atoms()[(0, 0)], 0.5);
        assert!((p.atoms().column(1).norm() - 1.0).abs() < 1e-15);
        let again = project_dictionary(p.atoms().clone());
        assert_eq!(again, p);

        let x = DMatrix::from_element(2, 2, 1.5);
        assert_eq!(project_frobenius_ball(x.clone(), 6.0), x);
        let shrunk = project_frobenius_ball(x.clone(), 1.0);
        assert!((shrunk[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_zero_duals_is_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let topo = build_cycle(4).unwrap();
        let init = random_agent(&mut rng, 6, 3, 3);
        let state = NetworkState::broadcast(&topo, &init);
        let grads = vec![
            AgentGradient {
                dict: DMatrix::zeros(6, 3),
                clf: DMatrix::zeros(4, 3),
            };
            4
        ];
        let next = state.step(&topo, &grads, 0.1, &Bounds::defaults(6, 3, 3)).unwrap();
        assert_eq!(next, state);
    }

    #[test]
    fn missing_neighbor_dual_is_protocol_error() {
        let grad = DMatrix::zeros(2, 2);
        let own = DMatrix::zeros(2, 2);
        let dict = Dictionary::new(DMatrix::zeros(2, 2)).unwrap();
        let err = primal_step_dict(&dict, &[(1, &own)], &BTreeMap::new(), &grad, 0.1).unwrap_err();
        assert!(matches!(err, Error::Protocol(_)));
    }

    #[test]
    fn antisymmetric_drift_after_one_dual_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_agent(&mut rng, 5, 4, 2);
        let b = random_agent(&mut rng, 5, 4, 2);
        let zero = EdgeDuals {
            lambda: DMatrix::zeros(5, 4),
            nu: DMatrix::zeros(5, 2),
        };
        let bounds = Bounds::defaults(5, 4, 2);
        let ab = dual_step_edge(&zero, &a, &b, 0.05, &bounds);
        let ba = dual_step_edge(&zero, &b, &a, 0.05, &bounds);
        assert_eq!(ab.lambda, -ba.lambda);
        assert_eq!(ab.nu, -ba.nu);
    }

    #[test]
    fn dual_projection_hits_boundary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_agent(&mut rng, 3, 3, 2);
        let b = random_agent(&mut rng, 3, 3, 2);
        let bounds = Bounds {
            k_w: 1.0,
            k_lambda: 1e-3,
            k_nu: 1e-3,
        };
        let zero = EdgeDuals {
            lambda: DMatrix::zeros(3, 3),
            nu: DMatrix::zeros(4, 2),
        };
        let out = dual_step_edge(&zero, &a, &b, 1.0, &bounds);
        assert!((out.lambda.norm() - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn identical_agents_stay_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let topo = build_random(6, 0.5, 1).unwrap();
        let init = random_agent(&mut rng, 4, 3, 3);
        let mut state = NetworkState::broadcast(&topo, &init);
        let bounds = Bounds::defaults(4, 3, 3);
        for _ in 0..10 {
            let g = AgentGradient {
                dict: random_matrix(&mut rng, 4, 3),
                clf: random_matrix(&mut rng, 4, 3),
            };
            state = state.step(&topo, &vec![g; 6], 0.1, &bounds).unwrap();
        }
        for a in &state.agents[1..] {
            assert_eq!(a, &state.agents[0]);
        }
        assert!(state.duals.iter().all(|d| d.lambda.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn stationarity_zero_at_consensus_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let topo = build_cycle(3).unwrap();
        let init = random_agent(&mut rng, 4, 2, 2);
        let state = NetworkState::broadcast(&topo, &init);
        let grads = vec![
            AgentGradient {
                dict: DMatrix::zeros(4, 2),
                clf: DMatrix::zeros(3, 2),
            };
            3
        ];
        let r = stationarity_report(&topo, &state, &grads, &state.agents, 0.05, &Bounds::defaults(4, 2, 2)).unwrap();
        assert_eq!(r, StationarityReport::default());
    }

    #[test]
    fn feasibility_counts_violations() {
        let topo = build_cycle(2).unwrap();
        let init = AgentState {
            dict: Dictionary::new(DMatrix::zeros(2, 2)).unwrap(),
            clf: ClassifierParams::zeros(2, 2),
        };
        let mut state = NetworkState::broadcast(&topo, &init);
        let bounds = Bounds::defaults(2, 2, 2);
        assert_eq!(state.feasibility_violations(&bounds), 0);
        state.duals[0].lambda[(0, 0)] = 1e9;
        assert_eq!(state.feasibility_violations(&bounds), 1);
    }

    #[test]
    fn clipping_is_elementwise() {
        let g = AgentGradient {
            dict: DMatrix::from_row_slice(1, 3, &[-2.0, 0.1, 0.3]),
            clf: DMatrix::from_row_slice(1, 2, &[5.0, -0.2]),
        }
        .clipped(0.25);
        assert_eq!(g.dict.as_slice(), &[-0.25, 0.1, 0.25]);
        assert_eq!(g.clf.as_slice(), &[0.25, -0.2]);
    }
}
