//! Binary checkpoints: magic `D4L1`, little-endian `u32` dimensions
//! `N, m, k, C, M`, then row-major `f64` arrays: for each agent its
//! dictionary (`m x k`) and classifier (`(k+1) x C`), and for each directed
//! edge, in topology order, `Lambda` (`m x k`) and `nu` (`(k+1) x C`).

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use super::{AgentState, EdgeDuals, NetworkState};
use crate::coding::Dictionary;
use crate::error::{Error, Result};
use crate::losses::ClassifierParams;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"D4L1";

fn put_matrix(out: &mut Vec<u8>, x: &DMatrix<f64>) {
    for r in 0..x.nrows() {
        for c in 0..x.ncols() {
            out.extend_from_slice(&x[(r, c)].to_le_bytes());
        }
    }
}

pub fn encode_checkpoint(state: &NetworkState) -> Vec<u8> {
    let first = &state.agents[0];
    let (m, k) = first.dict.atoms().shape();
    let n_classes = first.clf.n_classes();
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    for d in [state.agents.len(), m, k, n_classes, state.duals.len()] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for a in &state.agents {
        put_matrix(&mut out, a.dict.atoms());
        put_matrix(&mut out, a.clf.weights());
    }
    for d in &state.duals {
        put_matrix(&mut out, &d.lambda);
        put_matrix(&mut out, &d.nu);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos + n;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::format(self.origin, "checkpoint is truncated"))?;
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let raw = self.take(rows * cols * 8)?;
        let vals: Vec<f64> = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok(DMatrix::from_row_slice(rows, cols, &vals))
    }
}

/// Decodes a checkpoint. `origin` only labels error messages.
pub fn decode_checkpoint(bytes: &[u8], origin: &Path) -> Result<NetworkState> {
    if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::format(origin, "missing D4L1 checkpoint header"));
    }
    let mut rd = Reader { bytes, pos: 4, origin };
    let (n, m, k, c, n_edges) = (rd.u32()?, rd.u32()?, rd.u32()?, rd.u32()?, rd.u32()?);
    let mut agents = Vec::with_capacity(n);
    for _ in 0..n {
        let dict = Dictionary::new(rd.matrix(m, k)?).map_err(|e| Error::format(origin, e.to_string()))?;
        let clf = ClassifierParams::new(rd.matrix(k + 1, c)?).map_err(|e| Error::format(origin, e.to_string()))?;
        agents.push(AgentState { dict, clf });
    }
    let mut duals = Vec::with_capacity(n_edges);
    for _ in 0..n_edges {
        duals.push(EdgeDuals {
            lambda: rd.matrix(m, k)?,
            nu: rd.matrix(k + 1, c)?,
        });
    }
    if rd.pos != bytes.len() {
        return Err(Error::format(origin, "trailing bytes after checkpoint body"));
    }
    Ok(NetworkState { agents, duals })
}

pub fn write_checkpoint(path: &Path, state: &NetworkState) -> Result<()> {
    fs::write(path, encode_checkpoint(state)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<NetworkState> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::build_cycle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_and_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let topo = build_cycle(3).unwrap();
        let init = AgentState {
            dict: Dictionary::random(4, 2, &mut rng),
            clf: ClassifierParams::pinned(DMatrix::from_fn(3, 3, |_, _| rng.random())),
        };
        let mut state = NetworkState::broadcast(&topo, &init);
        state.duals[2].lambda[(1, 0)] = -3.5;
        let bytes = encode_checkpoint(&state);
        let per_agent = 4 * 2 + 3 * 3;
        assert_eq!(bytes.len(), 4 + 20 + 8 * (3 * per_agent + 6 * per_agent));
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[20..24].try_into().unwrap()), 6);
        // first stored value is D_0[(0,0)], the second D_0[(0,1)] (row-major)
        let second = f64::from_le_bytes(bytes[32..40].try_into().unwrap());
        assert_eq!(second, init.dict.atoms()[(0, 1)]);
        let back = decode_checkpoint(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, state);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(decode_checkpoint(b"D4L0", Path::new("x")).is_err());
        assert!(decode_checkpoint(b"D4L1\x01\0\0\0", Path::new("x")).is_err());
    }
}
