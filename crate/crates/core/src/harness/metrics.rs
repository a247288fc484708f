//! Metric rows, the metrics CSV, running averages and relative variation.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::saddle::{AgentState, StationarityReport};

pub const CSV_HEADER: &str = "t,agent,loss,acc,rv_dict,rv_clf,gn_dict,gn_clf,gn_lam,gn_nu,wall_ms";

/// Evaluation-set loss and accuracy of one agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentMetrics {
    pub loss: f64,
    pub acc: f64,
}

/// Network-level metrics at iteration `t` (the iterate before the `t`-th
/// update, 0-indexed), with per-agent breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub t: usize,
    /// Mean over agents.
    pub loss: f64,
    /// Mean over agents.
    pub acc: f64,
    pub rv_dict: f64,
    pub rv_clf: f64,
    pub stationarity: StationarityReport,
    pub wall_ms: u64,
    pub per_agent: Vec<AgentMetrics>,
}

impl MetricRow {
    pub fn is_finite(&self) -> bool {
        [
            self.loss,
            self.acc,
            self.rv_dict,
            self.rv_clf,
            self.stationarity.primal_dict_norm,
            self.stationarity.primal_clf_norm,
            self.stationarity.dual_lambda_norm,
            self.stationarity.dual_nu_norm,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// One aggregate line (`agent = -1`) per row followed by per-agent lines
/// carrying only loss and accuracy.
pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let s = &r.stationarity;
        writeln!(
            out,
            "{},-1,{},{},{},{},{},{},{},{},{}",
            r.t,
            r.loss,
            r.acc,
            r.rv_dict,
            r.rv_clf,
            s.primal_dict_norm,
            s.primal_clf_norm,
            s.dual_lambda_norm,
            s.dual_nu_norm,
            r.wall_ms
        )
        .unwrap();
        for (i, a) in r.per_agent.iter().enumerate() {
            writeln!(out, "{},{},{},{},,,,,,,", r.t, i, a.loss, a.acc).unwrap();
        }
    }
    out
}

/// Element-wise mean of the aggregate lines of several runs with identical
/// metric schedules (per-agent lines are dropped).
pub fn mean_rows(runs: &[Vec<MetricRow>]) -> Result<Vec<MetricRow>> {
    let first = runs.first().ok_or_else(|| Error::Input("no runs to average".into()))?;
    if runs.iter().any(|r| r.len() != first.len()) {
        return Err(Error::Shape("runs have different metric schedules".into()));
    }
    let n = runs.len() as f64;
    Ok((0..first.len())
        .map(|i| {
            let mean = |f: &dyn Fn(&MetricRow) -> f64| runs.iter().map(|r| f(&r[i])).sum::<f64>() / n;
            MetricRow {
                t: first[i].t,
                loss: mean(&|r| r.loss),
                acc: mean(&|r| r.acc),
                rv_dict: mean(&|r| r.rv_dict),
                rv_clf: mean(&|r| r.rv_clf),
                stationarity: StationarityReport {
                    primal_dict_norm: mean(&|r| r.stationarity.primal_dict_norm),
                    primal_clf_norm: mean(&|r| r.stationarity.primal_clf_norm),
                    dual_lambda_norm: mean(&|r| r.stationarity.dual_lambda_norm),
                    dual_nu_norm: mean(&|r| r.stationarity.dual_nu_norm),
                },
                wall_ms: (runs.iter().map(|r| r[i].wall_ms).sum::<u64>() as f64 / n).round() as u64,
                per_agent: Vec::new(),
            }
        })
        .collect())
}

/// Rows whose iteration lies in the first or last tenth of a `total`-iteration
/// run.
pub fn first_decile(rows: &[MetricRow], total: usize) -> Vec<&MetricRow> {
    rows.iter().filter(|r| r.t * 10 < total).collect()
}

pub fn final_decile(rows: &[MetricRow], total: usize) -> Vec<&MetricRow> {
    rows.iter().filter(|r| r.t * 10 >= total * 9).collect()
}

pub fn mean_of<'a>(rows: impl IntoIterator<Item = &'a MetricRow>, f: impl Fn(&MetricRow) -> f64) -> f64 {
    let (sum, n) = rows.into_iter().fold((0.0, 0usize), |(s, n), r| (s + f(r), n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Network mean over `i` of `(1/N) sum_j ||X_i - X_j||_F`.
pub fn relative_variation(averages: &[DMatrix<f64>]) -> f64 {
    let n = averages.len();
    if n == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for a in averages {
        for b in averages {
            total += (a - b).norm();
        }
    }
    total / (n * n) as f64
}

/// Time averages of every agent's dictionary and classifier, updated
/// incrementally as `X_t = X_{t-1} (t-1)/t + X_t / t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningAverages {
    pub dict: Vec<DMatrix<f64>>,
    pub clf: Vec<DMatrix<f64>>,
    count: usize,
}

impl RunningAverages {
    pub fn new(agents: &[AgentState]) -> Self {
        RunningAverages {
            dict: agents.iter().map(|a| DMatrix::zeros(a.dict.atoms().nrows(), a.dict.atoms().ncols())).collect(),
            clf: agents.iter().map(|a| DMatrix::zeros(a.clf.weights().nrows(), a.clf.weights().ncols())).collect(),
            count: 0,
        }
    }

    pub fn update(&mut self, agents: &[AgentState]) {
        self.count += 1;
        let t = self.count as f64;
        let keep = (t - 1.0) / t;
        for (avg, a) in self.dict.iter_mut().zip(agents) {
            *avg *= keep;
            *avg += a.dict.atoms() / t;
        }
        for (avg, a) in self.clf.iter_mut().zip(agents) {
            *avg *= keep;
            *avg += a.clf.weights() / t;
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn rv_dict(&self) -> f64 {
        relative_variation(&self.dict)
    }

    pub fn rv_clf(&self) -> f64 {
        relative_variation(&self.clf)
    }
}
