//! Communication graphs and the edge-incidence operator behind the
//! consensus constraints.
//!
//! Every undirected link is stored as two directed edges `(i, j)` and
//! `(j, i)`: the multiplier attached to `(i, j)` lives at node `i`, so the
//! two directions carry distinct dual variables. Edges are kept sorted
//! lexicographically, which fixes the serialization order used by
//! checkpoints.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Attempts made by the random generators before giving up on connectivity.
pub const MAX_GENERATION_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    out_edges: Vec<Vec<usize>>,
    reverse: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct TopologyJson {
    n: usize,
    edges: Vec<[usize; 2]>,
}

impl Topology {
    /// Builds a topology from directed edges. The edge set must be symmetric,
    /// free of self-loops and duplicates; connectivity is not required here
    /// (see [`Topology::is_connected`]).
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize("a topology needs at least one node".into()));
        }
        let mut sorted: Vec<(usize, usize)> = edges.into_iter().collect();
        sorted.sort_unstable();
        for w in sorted.windows(2) {
            if w[0] == w[1] {
                return Err(Error::Input(format!("duplicate edge {:?}", w[0])));
            }
        }
        for &(i, j) in &sorted {
            if i >= n || j >= n {
                return Err(Error::Input(format!("edge ({i},{j}) out of range for n={n}")));
            }
            if i == j {
                return Err(Error::Input(format!("self-loop at node {i}")));
            }
        }
        let mut reverse = Vec::with_capacity(sorted.len());
        for &(i, j) in &sorted {
            match sorted.binary_search(&(j, i)) {
                Ok(r) => reverse.push(r),
                Err(_) => {
                    return Err(Error::Input(format!(
                        "edge ({i},{j}) has no reverse edge; topology must be symmetric"
                    )))
                }
            }
        }
        let mut neighbors = vec![Vec::new(); n];
        let mut out_edges = vec![Vec::new(); n];
        for (e, &(i, j)) in sorted.iter().enumerate() {
            neighbors[i].push(j);
            out_edges[i].push(e);
        }
        Ok(Topology {
            n,
            edges: sorted,
            neighbors,
            out_edges,
            reverse,
        })
    }

    /// A single isolated node: the centralized case.
    pub fn single() -> Self {
        Topology::from_edges(1, std::iter::empty()).expect("one node is always valid")
    }

    fn from_undirected(n: usize, pairs: &BTreeSet<(usize, usize)>) -> Self {
        let edges = pairs.iter().flat_map(|&(i, j)| [(i, j), (j, i)]);
        Topology::from_edges(n, edges).expect("generators emit valid undirected pairs")
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Neighbors of `i`, ascending.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Indices of the edges `(i, j)` starting at `i`, in the same order as
    /// [`Topology::neighbors`].
    pub fn out_edges(&self, i: usize) -> &[usize] {
        &self.out_edges[i]
    }

    /// Index of `(j, i)` given the index of `(i, j)`.
    pub fn reverse_edge(&self, e: usize) -> usize {
        self.reverse[e]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    fn bfs_from(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &v in &self.neighbors[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.bfs_from(0).iter().all(Option::is_some)
    }

    /// Graph diameter (hop count); `None` when disconnected. Reported as a
    /// diagnostic only.
    pub fn diameter(&self) -> Option<usize> {
        let mut best = 0;
        for s in 0..self.n {
            for d in self.bfs_from(s) {
                best = best.max(d?);
            }
        }
        Some(best)
    }

    pub fn to_json(&self) -> String {
        let json = TopologyJson {
            n: self.n,
            edges: self.edges.iter().map(|&(i, j)| [i, j]).collect(),
        };
        serde_json::to_string(&json).expect("topology serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let json: TopologyJson =
            serde_json::from_str(text).map_err(|e| Error::Input(format!("topology JSON: {e}")))?;
        Topology::from_edges(json.n, json.edges.into_iter().map(|[i, j]| (i, j)))
    }

    /// Applies the block incidence operator: edge `e = (i, j)` receives
    /// `blocks[i] - blocks[j]`.
    pub fn incidence_apply(&self, blocks: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
        if blocks.len() != self.n {
            return Err(Error::Shape(format!(
                "expected {} agent blocks, got {}",
                self.n,
                blocks.len()
            )));
        }
        let shape = blocks[0].shape();
        if let Some(b) = blocks.iter().find(|b| b.shape() != shape) {
            return Err(Error::Shape(format!(
                "agent blocks differ in shape: {:?} vs {:?}",
                shape,
                b.shape()
            )));
        }
        Ok(self
            .edges
            .iter()
            .map(|&(i, j)| &blocks[i] - &blocks[j])
            .collect())
    }

    /// The scalar `M x N` incidence matrix; the block operators are its
    /// Kronecker product with an identity.
    pub fn incidence_matrix(&self) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(self.edges.len(), self.n);
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            c[(e, i)] = 1.0;
            c[(e, j)] = -1.0;
        }
        c
    }

    /// Smallest nonzero and largest singular values of the block incidence
    /// operator. Kronecker structure with the identity means `block_dim` only
    /// repeats each singular value, so the scalar incidence matrix suffices.
    pub fn spectral_bounds(&self, block_dim: usize) -> Result<(f64, f64)> {
        if block_dim == 0 {
            return Err(Error::InvalidSize("block dimension must be positive".into()));
        }
        if !self.is_connected() {
            return Err(Error::Precondition(
                "spectral bounds require a connected topology".into(),
            ));
        }
        if self.edges.is_empty() {
            return Err(Error::Precondition(
                "a single node has no incidence spectrum".into(),
            ));
        }
        let c = self.incidence_matrix();
        let gram = c.transpose() * &c;
        let eig = SymmetricEigen::new(gram);
        let mut sv: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();
        sv.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let largest = *sv.last().unwrap();
        let cutoff = 1e-9 * largest.max(1.0);
        let smallest = sv
            .iter()
            .copied()
            .find(|&s| s > cutoff)
            .ok_or_else(|| Error::Precondition("incidence matrix has no nonzero singular value".into()))?;
        Ok((smallest, largest))
    }
}

fn require_size(n: usize, min: usize) -> Result<()> {
    if n < min {
        Err(Error::InvalidSize(format!("need at least {min} nodes, got {n}")))
    } else {
        Ok(())
    }
}

fn undirected(i: usize, j: usize) -> (usize, usize) {
    (i.min(j), i.max(j))
}

/// Closed chain `0 - 1 - ... - (n-1) - 0`.
pub fn build_cycle(n: usize) -> Result<Topology> {
    require_size(n, 2)?;
    let pairs: BTreeSet<_> = (0..n).map(|i| undirected(i, (i + 1) % n)).collect();
    Ok(Topology::from_undirected(n, &pairs))
}

/// `s x s` lattice with `s = floor(sqrt(n))`; the `n - s^2` remaining nodes
/// are chained one after another, each also linked to the next lattice node
/// along the perimeter (clockwise from node 0).
pub fn build_grid(n: usize) -> Result<Topology> {
    require_size(n, 2)?;
    let mut side = (n as f64).sqrt().floor() as usize;
    while (side + 1) * (side + 1) <= n {
        side += 1;
    }
    while side * side > n {
        side -= 1;
    }
    let at = |r: usize, c: usize| r * side + c;
    let mut pairs = BTreeSet::new();
    for r in 0..side {
        for c in 0..side {
            if c + 1 < side {
                pairs.insert(undirected(at(r, c), at(r, c + 1)));
            }
            if r + 1 < side {
                pairs.insert(undirected(at(r, c), at(r + 1, c)));
            }
        }
    }
    let perimeter = perimeter_walk(side);
    for q in 0..(n - side * side) {
        let node = side * side + q;
        pairs.insert(undirected(node, perimeter[q % perimeter.len()]));
        if q > 0 {
            pairs.insert(undirected(node, node - 1));
        }
    }
    Ok(Topology::from_undirected(n, &pairs))
}

fn perimeter_walk(side: usize) -> Vec<usize> {
    if side == 1 {
        return vec![0];
    }
    let at = |r: usize, c: usize| r * side + c;
    let mut walk = Vec::with_capacity(4 * side - 4);
    walk.extend((0..side).map(|c| at(0, c)));
    walk.extend((1..side).map(|r| at(r, side - 1)));
    walk.extend((0..side - 1).rev().map(|c| at(side - 1, c)));
    walk.extend((1..side - 1).rev().map(|r| at(r, 0)));
    walk
}

fn attempt_rng(seed: u64, attempt: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(attempt as u64);
    rng
}

fn retry_connected(
    n: usize,
    rho: f64,
    seed: u64,
    mut generate: impl FnMut(&mut ChaCha8Rng) -> BTreeSet<(usize, usize)>,
) -> Result<Topology> {
    for attempt in 0..MAX_GENERATION_ATTEMPTS {
        let mut rng = attempt_rng(seed, attempt);
        let topo = Topology::from_undirected(n, &generate(&mut rng));
        if topo.is_connected() {
            return Ok(topo);
        }
    }
    Err(Error::GenerationFailure {
        attempts: MAX_GENERATION_ATTEMPTS,
        rho,
    })
}

/// Erdős–Rényi graph: every unordered pair is linked with probability `rho`;
/// redrawn with the next sub-seed until connected.
pub fn build_random(n: usize, rho: f64, seed: u64) -> Result<Topology> {
    require_size(n, 2)?;
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Input(format!("rho must lie in (0, 1], got {rho}")));
    }
    retry_connected(n, rho, seed, |rng| {
        let mut pairs = BTreeSet::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < rho {
                    pairs.insert((i, j));
                }
            }
        }
        pairs
    })
}

/// Watts–Strogatz style graph: a nearest-neighbor ring whose links are each
/// rewired with probability `rho` to a uniformly chosen non-adjacent node.
pub fn build_small_world(n: usize, rho: f64, seed: u64) -> Result<Topology> {
    require_size(n, 3)?;
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Input(format!("rho must lie in (0, 1), got {rho}")));
    }
    retry_connected(n, rho, seed, |rng| rewired_ring(n, rho, rng))
}

pub(crate) fn rewired_ring(n: usize, rho: f64, rng: &mut impl Rng) -> BTreeSet<(usize, usize)> {
    let mut pairs: BTreeSet<_> = (0..n).map(|i| undirected(i, (i + 1) % n)).collect();
    for i in 0..n {
        let original = undirected(i, (i + 1) % n);
        if !rng.random_bool(rho) {
            continue;
        }
        let candidates: Vec<usize> = (0..n)
            .filter(|&j| j != i && !pairs.contains(&undirected(i, j)))
            .collect();
        if candidates.is_empty() || !pairs.contains(&original) {
            continue;
        }
        let target = candidates[rng.random_range(0..candidates.len())];
        pairs.remove(&original);
        pairs.insert(undirected(i, target));
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge_set(t: &Topology) -> Vec<(usize, usize)> {
        t.edges().to_vec()
    }

    #[test]
    fn cycle_of_three_is_complete() {
        let t = build_cycle(3).unwrap();
        assert_eq!(
            edge_set(&t),
            vec![(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]
        );
    }

    #[test]
    fn cycle_of_two_is_single_link() {
        let t = build_cycle(2).unwrap();
        assert_eq!(edge_set(&t), vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn cycle_of_twenty() {
        let t = build_cycle(20).unwrap();
        assert_eq!(t.n_edges(), 40);
        assert!((0..20).all(|i| t.degree(i) == 2));
        assert_eq!(t.diameter(), Some(10));
        assert_eq!(t.neighbors(0), &[1, 19]);
    }

    #[test]
    fn undersized_graphs_are_rejected() {
        assert!(matches!(build_cycle(1), Err(Error::InvalidSize(_))));
        assert!(matches!(build_grid(1), Err(Error::InvalidSize(_))));
        assert!(matches!(build_random(1, 0.5, 0), Err(Error::InvalidSize(_))));
        assert!(matches!(build_small_world(2, 0.5, 0), Err(Error::InvalidSize(_))));
    }

    #[test]
    fn grid_exact_squares() {
        let t = build_grid(4).unwrap();
        assert_eq!(t.n_edges(), 8);
        let t = build_grid(9).unwrap();
        assert_eq!(t.degree(0), 2);
        assert_eq!(t.degree(2), 2);
        assert_eq!(t.degree(4), 4);
        assert_eq!(t.n_edges(), 24);
    }

    #[test]
    fn grid_with_remainder() {
        let t = build_grid(20).unwrap();
        assert!(t.is_connected());
        // 4x4 lattice; remainder 16..19 hang off perimeter nodes 0..3 and
        // chain to each other.
        let expected = [
            3, 4, 4, 3, 3, 4, 4, 3, 3, 4, 4, 3, 2, 3, 3, 2, 2, 3, 3, 2,
        ];
        let degrees: Vec<usize> = (0..20).map(|i| t.degree(i)).collect();
        assert_eq!(degrees, expected);
        assert_eq!(t.n_edges(), 62);
    }

    #[test]
    fn small_grids_stay_connected() {
        for n in 2..40 {
            let t = build_grid(n).unwrap();
            assert!(t.is_connected(), "grid {n} disconnected");
        }
    }

    #[test]
    fn random_complete_when_rho_is_one() {
        let t = build_random(10, 1.0, 42).unwrap();
        assert_eq!(t.n_edges(), 90);
    }

    #[test]
    fn random_is_deterministic() {
        let a = build_random(10, 0.2, 7).unwrap();
        let b = build_random(10, 0.2, 7).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert!(a.is_connected());
    }

    #[test]
    fn random_edge_count_concentrates() {
        let t = build_random(100, 0.2, 11).unwrap();
        let undirected = t.n_edges() / 2;
        assert!((891..=1089).contains(&undirected), "{undirected}");
    }

    #[test]
    fn random_generation_failure() {
        let err = build_random(60, 1e-6, 0).unwrap_err();
        assert!(matches!(err, Error::GenerationFailure { .. }));
    }

    #[test]
    fn small_world_vanishing_rho_is_ring() {
        let ring = build_cycle(20).unwrap();
        for seed in 0..5 {
            let t = build_small_world(20, 1e-9, seed).unwrap();
            assert_eq!(edge_set(&t), edge_set(&ring));
        }
    }

    #[test]
    fn small_world_preserves_mean_degree() {
        let t = build_small_world(20, 0.2, 3).unwrap();
        assert!(t.is_connected());
        assert_eq!(t.n_edges(), 40);
    }

    #[test]
    fn small_world_triangle() {
        for seed in 0..10 {
            let t = build_small_world(3, 0.9, seed).unwrap();
            assert_eq!(t.n_edges(), 6);
        }
    }

    #[test]
    fn incidence_antisymmetry() {
        let t = build_cycle(2).unwrap();
        let b0 = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let b1 = DMatrix::from_row_slice(1, 2, &[0.5, -1.0]);
        let out = t.incidence_apply(&[b0.clone(), b1.clone()]).unwrap();
        assert_eq!(out[0], &b0 - &b1);
        assert_eq!(out[1], &b1 - &b0);
    }

    #[test]
    fn incidence_block_count_mismatch() {
        let t = build_cycle(3).unwrap();
        let err = t.incidence_apply(&[DMatrix::zeros(2, 2)]).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn spectral_bounds_two_nodes() {
        let t = build_cycle(2).unwrap();
        let (g, big) = t.spectral_bounds(1).unwrap();
        assert!((g - 2.0).abs() < 1e-12);
        assert!((big - 2.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_bounds_disconnected() {
        let t = Topology::from_edges(4, [(0, 1), (1, 0), (2, 3), (3, 2)]).unwrap();
        assert!(matches!(t.spectral_bounds(1), Err(Error::Precondition(_))));
    }

    #[test]
    fn from_edges_rejects_asymmetric() {
        assert!(Topology::from_edges(3, [(0, 1)]).is_err());
        assert!(Topology::from_edges(3, [(0, 0)]).is_err());
        assert!(Topology::from_edges(3, [(0, 1), (1, 0), (0, 1)]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let t = build_grid(7).unwrap();
        let text = t.to_json();
        assert!(text.starts_with("{\"n\":7,\"edges\":[[0,1],"));
        assert_eq!(Topology::from_json(&text).unwrap(), t);
    }

    #[test]
    fn reverse_edges_pair_up() {
        let t = build_random(12, 0.3, 5).unwrap();
        for (e, &(i, j)) in t.edges().iter().enumerate() {
            assert_eq!(t.edges()[t.reverse_edge(e)], (j, i));
        }
    }
}
