//! Elastic-net sparse coding and the implicit-differentiation pieces used
//! by task-driven dictionary gradients.
//!
//! The coder minimizes
//!
//! ```text
//! 0.5 * ||x - D a||^2 + zeta1 * ||a||_1 + 0.5 * zeta2 * ||a||^2
//! ```
//!
//! by cyclic coordinate descent with soft-thresholding. Once the sign pattern
//! settles, the active-set linear system
//! `(D_Z^T D_Z + zeta2 I) a_Z = D_Z^T x - zeta1 s_Z` is solved directly and
//! accepted if it satisfies the subgradient optimality conditions, so the
//! returned codes are exact up to rounding rather than up to a sweep
//! tolerance.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Optimality tolerance a returned code must meet.
pub const TOL_KKT: f64 = 1e-8;
/// Coordinate-descent sweep budget.
pub const MAX_SWEEPS: usize = 10_000;
/// Sweeps stop once no coordinate moves by more than this.
pub const SWEEP_TOL: f64 = 1e-10;
/// Ridge added to a singular active-set Gram matrix when `zeta2 = 0`.
pub const RIDGE_FALLBACK: f64 = 1e-10;

const NORM_SLACK: f64 = 1e-12;

/// An `m x k` dictionary whose atoms (columns) lie in the unit ball.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: DMatrix<f64>,
}

impl Dictionary {
    pub fn new(atoms: DMatrix<f64>) -> Result<Self> {
        if atoms.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("dictionary has non-finite entries".into()));
        }
        for (l, col) in atoms.column_iter().enumerate() {
            let norm = col.norm();
            if norm > 1.0 + NORM_SLACK {
                return Err(Error::Input(format!(
                    "atom {l} has norm {norm}, outside the unit ball"
                )));
            }
        }
        Ok(Dictionary { atoms })
    }

    /// Wraps a matrix already known to satisfy the column-norm bound.
    pub(crate) fn from_projected(atoms: DMatrix<f64>) -> Self {
        debug_assert!(atoms
            .column_iter()
            .all(|c| c.norm() <= 1.0 + NORM_SLACK || !c.norm().is_finite()));
        Dictionary { atoms }
    }

    /// Gaussian atoms scaled to unit norm.
    pub fn random(m: usize, k: usize, rng: &mut impl Rng) -> Self {
        let mut atoms = DMatrix::from_fn(m, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        for mut col in atoms.column_iter_mut() {
            let norm = col.norm();
            if norm > 0.0 {
                col /= norm;
            }
        }
        Dictionary { atoms }
    }

    pub fn atoms(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.atoms
    }

    pub fn signal_dim(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn max_atom_norm(&self) -> f64 {
        self.atoms
            .column_iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    /// `D a` for a sparse code, touching only the active atoms.
    pub fn reconstruct(&self, code: &SparseCode) -> DVector<f64> {
        let mut out = DVector::zeros(self.signal_dim());
        for &l in &code.active_set {
            out.axpy(code.alpha[l], &self.atoms.column(l), 1.0);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticNetParams {
    pub zeta1: f64,
    pub zeta2: f64,
}

impl ElasticNetParams {
    pub fn new(zeta1: f64, zeta2: f64) -> Result<Self> {
        let p = ElasticNetParams { zeta1, zeta2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.zeta1.is_finite() && self.zeta1 >= 0.0) {
            return Err(Error::Input(format!("zeta1 must be >= 0, got {}", self.zeta1)));
        }
        if !(self.zeta2.is_finite() && self.zeta2 >= 0.0) {
            return Err(Error::Input(format!("zeta2 must be >= 0, got {}", self.zeta2)));
        }
        Ok(())
    }
}

/// Output of the coder: the code, its support `Z` (ascending) and the signs
/// on the support.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    pub alpha: DVector<f64>,
    pub active_set: Vec<usize>,
    pub signs: Vec<f64>,
    /// Set when the active-set system needed the ridge fallback.
    pub stabilized: bool,
}

impl SparseCode {
    pub fn zeros(k: usize) -> Self {
        SparseCode {
            alpha: DVector::zeros(k),
            active_set: Vec::new(),
            signs: Vec::new(),
            stabilized: false,
        }
    }

    fn from_alpha(alpha: DVector<f64>, stabilized: bool) -> Self {
        let active_set: Vec<usize> = (0..alpha.len()).filter(|&l| alpha[l] != 0.0).collect();
        let signs = active_set.iter().map(|&l| alpha[l].signum()).collect();
        SparseCode {
            alpha,
            active_set,
            signs,
            stabilized,
        }
    }
}

/// Implicit-differentiation adjoint on the active set.
#[derive(Debug, Clone, PartialEq)]
pub struct Beta {
    pub values: DVector<f64>,
    pub stabilized: bool,
}

/// Elastic-net objective at `alpha`.
pub fn objective(dict: &Dictionary, x: &DVector<f64>, alpha: &DVector<f64>, params: &ElasticNetParams) -> f64 {
    let r = x - dict.atoms() * alpha;
    0.5 * r.norm_squared() + params.zeta1 * alpha.lp_norm(1) + 0.5 * params.zeta2 * alpha.norm_squared()
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

fn submatrix(gram: &DMatrix<f64>, idx: &[usize], ridge: f64) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |a, b| {
        gram[(idx[a], idx[b])] + if a == b { ridge } else { 0.0 }
    })
}

/// Solves `(G_ZZ + zeta2 I) v = rhs`, falling back to a tiny ridge when the
/// system is singular and `zeta2 = 0`. Returns the solution and whether the
/// fallback fired.
fn solve_active(gram: &DMatrix<f64>, idx: &[usize], zeta2: f64, rhs: DVector<f64>) -> Result<(DVector<f64>, bool)> {
    if let Some(chol) = submatrix(gram, idx, zeta2).cholesky() {
        let sol = chol.solve(&rhs);
        if sol.iter().all(|v| v.is_finite()) {
            return Ok((sol, false));
        }
    }
    let ridge = zeta2.max(RIDGE_FALLBACK);
    let chol = submatrix(gram, idx, ridge)
        .cholesky()
        .ok_or_else(|| Error::Numeric("active-set Gram matrix is not positive definite".into()))?;
    Ok((chol.solve(&rhs), true))
}

/// Coder bound to one dictionary; caches `D^T D` so that coding many
/// signals against the same dictionary costs one Gram product.
#[derive(Debug, Clone)]
pub struct SparseCoder<'a> {
    dict: &'a Dictionary,
    gram: DMatrix<f64>,
    params: ElasticNetParams,
}

impl<'a> SparseCoder<'a> {
    pub fn new(dict: &'a Dictionary, params: ElasticNetParams) -> Result<Self> {
        params.validate()?;
        if dict.atoms().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("dictionary has non-finite entries".into()));
        }
        let gram = dict.atoms().tr_mul(dict.atoms());
        Ok(SparseCoder { dict, gram, params })
    }

    pub fn dictionary(&self) -> &Dictionary {
        self.dict
    }

    pub fn params(&self) -> &ElasticNetParams {
        &self.params
    }

    pub fn code(&self, x: &DVector<f64>) -> Result<SparseCode> {
        let dict = self.dict;
        if x.len() != dict.signal_dim() {
            return Err(Error::Shape(format!(
                "signal has length {}, dictionary expects {}",
                x.len(),
                dict.signal_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("signal has non-finite entries".into()));
        }
        let k = dict.n_atoms();
        let corr = dict.atoms().tr_mul(x);
        if corr.iter().all(|c| c.abs() <= self.params.zeta1) {
            return Ok(SparseCode::zeros(k));
        }

        let ElasticNetParams { zeta1, zeta2 } = self.params;
        let mut alpha = DVector::<f64>::zeros(k);
        // q = G alpha, kept in sync with alpha.
        let mut q = DVector::<f64>::zeros(k);
        let mut prev_pattern: Vec<i8> = vec![0; k];
        for _ in 0..MAX_SWEEPS {
            let mut max_delta = 0.0f64;
            for l in 0..k {
                let g_ll = self.gram[(l, l)];
                let denom = g_ll + zeta2;
                if denom <= 0.0 {
                    continue;
                }
                let z = corr[l] - q[l] + g_ll * alpha[l];
                let updated = soft_threshold(z, zeta1) / denom;
                let delta = updated - alpha[l];
                if delta != 0.0 {
                    q.axpy(delta, &self.gram.column(l), 1.0);
                    alpha[l] = updated;
                    max_delta = max_delta.max(delta.abs());
                }
            }
            let pattern: Vec<i8> = alpha.iter().map(|v| v.signum_pattern()).collect();
            let settled = max_delta <= SWEEP_TOL;
            if pattern == prev_pattern || settled {
                if let Some(code) = self.refine(x, &corr, &pattern)? {
                    return Ok(code);
                }
            }
            if settled {
                break;
            }
            prev_pattern = pattern;
        }
        Ok(SparseCode::from_alpha(alpha, false))
    }

    /// Exact solve on a candidate sign pattern; `None` if the pattern is not
    /// optimal.
    fn refine(&self, x: &DVector<f64>, corr: &DVector<f64>, pattern: &[i8]) -> Result<Option<SparseCode>> {
        let ElasticNetParams { zeta1, zeta2 } = self.params;
        let k = pattern.len();
        let idx: Vec<usize> = (0..k).filter(|&l| pattern[l] != 0).collect();
        let mut alpha = DVector::zeros(k);
        let mut stabilized = false;
        if !idx.is_empty() {
            let rhs = DVector::from_iterator(
                idx.len(),
                idx.iter().map(|&l| corr[l] - zeta1 * f64::from(pattern[l])),
            );
            let (sol, fallback) = solve_active(&self.gram, &idx, zeta2, rhs)?;
            stabilized = fallback;
            for (a, &l) in idx.iter().enumerate() {
                if sol[a] == 0.0 || sol[a].signum_pattern() != pattern[l] {
                    return Ok(None);
                }
                alpha[l] = sol[a];
            }
        }
        let code = SparseCode::from_alpha(alpha, stabilized);
        if kkt_residual(self.dict, x, &code, &self.params) <= TOL_KKT {
            Ok(Some(code))
        } else {
            Ok(None)
        }
    }

    /// `beta_Z = (D_Z^T D_Z + zeta2 I)^{-1} (grad_alpha)_Z`, zero off the
    /// support.
    pub fn beta(&self, code: &SparseCode, grad_alpha: &DVector<f64>) -> Result<Beta> {
        beta_with_gram(&self.gram, code, grad_alpha, self.params.zeta2)
    }
}

trait SignPattern {
    fn signum_pattern(self) -> i8;
}

impl SignPattern for f64 {
    fn signum_pattern(self) -> i8 {
        if self > 0.0 {
            1
        } else if self < 0.0 {
            -1
        } else {
            0
        }
    }
}

fn beta_with_gram(gram: &DMatrix<f64>, code: &SparseCode, grad_alpha: &DVector<f64>, zeta2: f64) -> Result<Beta> {
    let k = gram.ncols();
    if grad_alpha.len() != k || code.alpha.len() != k {
        return Err(Error::Shape(format!(
            "beta: expected length-{k} code and gradient, got {} and {}",
            code.alpha.len(),
            grad_alpha.len()
        )));
    }
    let mut values = DVector::zeros(k);
    if code.active_set.is_empty() {
        return Ok(Beta {
            values,
            stabilized: false,
        });
    }
    let rhs = DVector::from_iterator(
        code.active_set.len(),
        code.active_set.iter().map(|&l| grad_alpha[l]),
    );
    let (sol, stabilized) = solve_active(gram, &code.active_set, zeta2, rhs)?;
    for (a, &l) in code.active_set.iter().enumerate() {
        values[l] = sol[a];
    }
    Ok(Beta { values, stabilized })
}

/// Codes `x` against `dict`. For many signals on one dictionary prefer
/// [`SparseCoder`].
pub fn code(dict: &Dictionary, x: &DVector<f64>, params: &ElasticNetParams) -> Result<SparseCode> {
    SparseCoder::new(dict, *params)?.code(x)
}

/// Largest violation of the elastic-net subgradient optimality conditions.
pub fn kkt_residual(dict: &Dictionary, x: &DVector<f64>, code: &SparseCode, params: &ElasticNetParams) -> f64 {
    let r = x - dict.reconstruct(code);
    let corr = dict.atoms().tr_mul(&r);
    let mut worst = 0.0f64;
    for l in 0..dict.n_atoms() {
        let a = code.alpha[l];
        let v = if a != 0.0 {
            (corr[l] - params.zeta2 * a - params.zeta1 * a.signum()).abs()
        } else {
            (corr[l].abs() - params.zeta1).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Shape-checked form of [`kkt_residual`].
pub fn verify_kkt(dict: &Dictionary, x: &DVector<f64>, code: &SparseCode, params: &ElasticNetParams) -> Result<f64> {
    if x.len() != dict.signal_dim() || code.alpha.len() != dict.n_atoms() {
        return Err(Error::Shape(format!(
            "kkt: dictionary is {}x{}, signal {}, code {}",
            dict.signal_dim(),
            dict.n_atoms(),
            x.len(),
            code.alpha.len()
        )));
    }
    Ok(kkt_residual(dict, x, code, params))
}

pub fn beta_vector(
    dict: &Dictionary,
    code: &SparseCode,
    grad_alpha: &DVector<f64>,
    params: &ElasticNetParams,
) -> Result<Beta> {
    let k = dict.n_atoms();
    let mut gram = DMatrix::zeros(k, k);
    for &a in &code.active_set {
        for &b in &code.active_set {
            gram[(a, b)] = dict.atoms().column(a).dot(&dict.atoms().column(b));
        }
    }
    beta_with_gram(&gram, code, grad_alpha, params.zeta2)
}

/// `-D beta alpha^T + (x - D alpha) beta^T`: gradient of `h(alpha*(D; x))`
/// with respect to `D`, without consensus terms.
pub fn dict_task_gradient(dict: &Dictionary, x: &DVector<f64>, code: &SparseCode, beta: &DVector<f64>) -> Result<DMatrix<f64>> {
    let (m, k) = (dict.signal_dim(), dict.n_atoms());
    if x.len() != m || code.alpha.len() != k || beta.len() != k {
        return Err(Error::Shape(format!(
            "gradient: dictionary {m}x{k}, signal {}, code {}, beta {}",
            x.len(),
            code.alpha.len(),
            beta.len()
        )));
    }
    let mut out = DMatrix::zeros(m, k);
    accumulate_dict_task_gradient(&mut out, dict, x, code, beta, 1.0);
    Ok(out)
}

/// Adds `scale * dict_task_gradient(..)` into `out`, exploiting that both
/// `alpha` and `beta` vanish off the active set.
pub(crate) fn accumulate_dict_task_gradient(
    out: &mut DMatrix<f64>,
    dict: &Dictionary,
    x: &DVector<f64>,
    code: &SparseCode,
    beta: &DVector<f64>,
    scale: f64,
) {
    if code.active_set.is_empty() {
        return;
    }
    let atoms = dict.atoms();
    let mut d_beta = DVector::zeros(dict.signal_dim());
    for &l in &code.active_set {
        d_beta.axpy(beta[l], &atoms.column(l), 1.0);
    }
    let residual = x - dict.reconstruct(code);
    for &l in &code.active_set {
        let mut col = out.column_mut(l);
        col.axpy(-scale * code.alpha[l], &d_beta, 1.0);
        col.axpy(scale * beta[l], &residual, 1.0);
    }
}
