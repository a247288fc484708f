//! 24x24 patches split into nine normalized 8x8 sub-patches, and the
//! aggregated code that serves as the classifier feature.

use nalgebra::DVector;

use crate::coding::{Dictionary, ElasticNetParams, SparseCode, SparseCoder};
use crate::data::image::GrayImage;
use crate::error::{Error, Result};

pub const PATCH_SIZE: usize = 24;
pub const SUBPATCH_SIZE: usize = 8;
pub const N_SUBPATCHES: usize = 9;
/// Length of a vectorized sub-patch.
pub const SIGNAL_DIM: usize = SUBPATCH_SIZE * SUBPATCH_SIZE;

/// Nine sub-patch signals in row-major tile order, each vectorized
/// column-major, zero-mean and unit-norm (or exactly zero when the raw
/// sub-patch was constant).
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSample {
    pub subpatches: Vec<DVector<f64>>,
    /// At least one sub-patch was constant and mapped to zero.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPatch {
    pub sample: PatchSample,
    pub label: usize,
}

/// Normalizes one raw vectorized sub-patch; `None` when it is constant.
fn normalize(mut v: DVector<f64>) -> Option<DVector<f64>> {
    let first = v[0];
    if v.iter().all(|&p| p == first) {
        return None;
    }
    let mean = v.mean();
    v.add_scalar_mut(-mean);
    let norm = v.norm();
    if norm == 0.0 {
        return None;
    }
    v /= norm;
    Some(v)
}

pub fn extract_patch(image: &GrayImage, row: usize, col: usize) -> Result<PatchSample> {
    if row + PATCH_SIZE > image.rows() || col + PATCH_SIZE > image.cols() {
        return Err(Error::Input(format!(
            "patch at ({row},{col}) exceeds {}x{} image",
            image.rows(),
            image.cols()
        )));
    }
    let mut subpatches = Vec::with_capacity(N_SUBPATCHES);
    let mut degenerate = false;
    for tile_r in 0..3 {
        for tile_c in 0..3 {
            let r0 = row + tile_r * SUBPATCH_SIZE;
            let c0 = col + tile_c * SUBPATCH_SIZE;
            // column-major: index = c * 8 + r
            let raw = DVector::from_fn(SIGNAL_DIM, |idx, _| {
                image.get(r0 + idx % SUBPATCH_SIZE, c0 + idx / SUBPATCH_SIZE)
            });
            match normalize(raw) {
                Some(v) => subpatches.push(v),
                None => {
                    degenerate = true;
                    subpatches.push(DVector::zeros(SIGNAL_DIM));
                }
            }
        }
    }
    Ok(PatchSample {
        subpatches,
        degenerate,
    })
}

/// Top-left corners of all patches at the given stride, row-major.
pub fn patch_positions(rows: usize, cols: usize, stride: usize) -> Vec<(usize, usize)> {
    assert!(stride > 0, "stride must be positive");
    if rows < PATCH_SIZE || cols < PATCH_SIZE {
        return Vec::new();
    }
    let rs = (0..=rows - PATCH_SIZE).step_by(stride);
    rs.flat_map(|r| (0..=cols - PATCH_SIZE).step_by(stride).map(move |c| (r, c)))
        .collect()
}

/// Sum of the sub-patch codes together with the individual codes.
pub fn aggregate_with(coder: &SparseCoder<'_>, sample: &PatchSample) -> Result<(DVector<f64>, Vec<SparseCode>)> {
    let k = coder.dictionary().n_atoms();
    let mut total = DVector::zeros(k);
    let mut codes = Vec::with_capacity(sample.subpatches.len());
    for x in &sample.subpatches {
        let code = coder.code(x)?;
        for &l in &code.active_set {
            total[l] += code.alpha[l];
        }
        codes.push(code);
    }
    Ok((total, codes))
}

pub fn aggregate_code(dict: &Dictionary, sample: &PatchSample, params: &ElasticNetParams) -> Result<DVector<f64>> {
    let coder = SparseCoder::new(dict, *params)?;
    aggregate_with(&coder, sample).map(|(total, _)| total)
}
