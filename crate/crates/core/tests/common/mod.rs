//! Independent oracles shared by the integration tests and the acceptance
//! suite. Nothing here calls the solver or update code under test.
#![allow(dead_code)]

use d4l::coding::{Dictionary, ElasticNetParams};
use d4l::topology::Topology;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_unit_vector(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let norm = v.norm();
    v / norm
}

/// Random dictionary whose atoms have norms in `[0.5, 0.95]`, so small perturbations stay
/// feasible.
pub fn random_dictionary(rng: &mut impl Rng, m: usize, k: usize) -> Dictionary {
    let mut d = random_matrix(rng, m, k);
    for mut col in d.column_iter_mut() {
        let target = rng.random_range(0.5..0.95);
        let norm = col.norm();
        col *= target / norm;
    }
    Dictionary::new(d).unwrap()
}

pub fn elastic_objective(d: &DMatrix<f64>, x: &DVector<f64>, a: &DVector<f64>, p: &ElasticNetParams) -> f64 {
    let r = x - d * a;
    0.5 * r.norm_squared() + p.zeta1 * a.lp_norm(1) + 0.5 * p.zeta2 * a.norm_squared()
}

/// Exhaustive elastic-net solver: for every sign pattern in `{-1,0,1}^k`
/// solve the active-set linear system by LU, keep solutions whose signs
/// match and whose inactive correlations satisfy `|d_l^T r| <= zeta1`, and
/// return the one with lowest objective.
pub fn sign_pattern_oracle(d: &DMatrix<f64>, x: &DVector<f64>, p: &ElasticNetParams) -> DVector<f64> {
    let k = d.ncols();
    let mut best: Option<(f64, DVector<f64>)> = None;
    let total = 3usize.pow(k as u32);
    for code in 0..total {
        let mut signs = vec![0i32; k];
        let mut c = code;
        for s in signs.iter_mut() {
            *s = (c % 3) as i32 - 1;
            c /= 3;
        }
        let z: Vec<usize> = (0..k).filter(|&l| signs[l] != 0).collect();
        let mut alpha = DVector::zeros(k);
        if !z.is_empty() {
            let dz = DMatrix::from_fn(d.nrows(), z.len(), |r, c| d[(r, z[c])]);
            let lhs = dz.transpose() * &dz + DMatrix::identity(z.len(), z.len()) * p.zeta2;
            let rhs = dz.transpose() * x - DVector::from_fn(z.len(), |a, _| p.zeta1 * signs[z[a]] as f64);
            let Some(sol) = lhs.lu().solve(&rhs) else { continue };
            if z.iter().enumerate().any(|(a, &l)| sol[a] * signs[l] as f64 <= 0.0) {
                continue;
            }
            for (a, &l) in z.iter().enumerate() {
                alpha[l] = sol[a];
            }
        }
        let r = x - d * &alpha;
        let ok = (0..k)
            .filter(|&l| signs[l] == 0)
            .all(|l| d.column(l).dot(&r).abs() <= p.zeta1 + 1e-12);
        if !ok {
            continue;
        }
        let obj = elastic_objective(d, x, &alpha, p);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, alpha));
        }
    }
    best.expect("elastic net always has a KKT point").1
}

pub fn sign_pattern(a: &DVector<f64>) -> Vec<i8> {
    a.iter()
        .map(|&v| if v > 0.0 { 1 } else if v < 0.0 { -1 } else { 0 })
        .collect()
}

/// Central difference of `f` at `x` along every entry of the matrix.
pub fn fd_matrix_gradient(x: &DMatrix<f64>, h: f64, mut f: impl FnMut(&DMatrix<f64>) -> f64) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(x.nrows(), x.ncols());
    for r in 0..x.nrows() {
        for c in 0..x.ncols() {
            let mut plus = x.clone();
            plus[(r, c)] += h;
            let mut minus = x.clone();
            minus[(r, c)] -= h;
            g[(r, c)] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
    }
    g
}

pub fn fd_vector_gradient(x: &DVector<f64>, h: f64, mut f: impl FnMut(&DVector<f64>) -> f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let mut plus = x.clone();
        plus[i] += h;
        let mut minus = x.clone();
        minus[i] -= h;
        (f(&plus) - f(&minus)) / (2.0 * h)
    })
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

/// Dense block incidence matrix `C (x) I_block` of size `(M b) x (N b)`.
pub fn dense_block_incidence(topo: &Topology, block: usize) -> DMatrix<f64> {
    let m = topo.n_edges();
    let n = topo.n_nodes();
    let mut c = DMatrix::zeros(m * block, n * block);
    for (e, &(i, j)) in topo.edges().iter().enumerate() {
        for b in 0..block {
            c[(e * block + b, i * block + b)] = 1.0;
            c[(e * block + b, j * block + b)] = -1.0;
        }
    }
    c
}

/// Stacks equally shaped blocks vertically.
pub fn stack(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let (r, c) = blocks[0].shape();
    let mut out = DMatrix::zeros(r * blocks.len(), c);
    for (i, b) in blocks.iter().enumerate() {
        out.view_mut((i * r, 0), (r, c)).copy_from(b);
    }
    out
}

pub fn unstack(x: &DMatrix<f64>, n: usize) -> Vec<DMatrix<f64>> {
    let r = x.nrows() / n;
    (0..n).map(|i| x.rows(i * r, r).into_owned()).collect()
}

/// Column-wise projection onto the unit ball (oracle copy).
pub fn oracle_project_columns(mut d: DMatrix<f64>) -> DMatrix<f64> {
    for mut col in d.column_iter_mut() {
        let n = col.norm();
        if n > 1.0 {
            col /= n;
        }
    }
    d
}

pub fn oracle_project_ball(x: DMatrix<f64>, radius: f64) -> DMatrix<f64> {
    let n = x.norm();
    if n > radius {
        x * (radius / n)
    } else {
        x
    }
}
