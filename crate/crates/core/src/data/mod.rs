//! Labeled sample streams: image ingestion, patch extraction, synthetic
//! textures, corpora with their sampling policies, and IMU-threshold labels.

pub mod image;
pub mod imu;
pub mod patch;
pub mod sampling;
pub mod synth;

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use image::{encode_raw, load_image, GrayImage};
use patch::{extract_patch, patch_positions, LabeledPatch};
use sampling::{derive_seed, Corpus};

/// Default spacing between patch corners when tiling an image.
pub const DEFAULT_STRIDE: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

/// One manifest line. Labels are 0-indexed class ids; a missing `split`
/// means the image is divided at patch level (see [`build_from_manifest`]).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

/// Reads a manifest; relative image paths are resolved against the
/// manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries: Vec<ManifestEntry> =
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    for entry in &mut entries {
        if entry.path.is_relative() {
            entry.path = base.join(&entry.path);
        }
    }
    Ok(entries)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let text = serde_json::to_string_pretty(entries).expect("manifest serializes");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// All patches of one image at the given stride, in row-major corner order.
pub fn patches_from_image(image: &GrayImage, label: usize, stride: usize) -> Result<Vec<LabeledPatch>> {
    if stride == 0 {
        return Err(Error::Input("stride must be positive".into()));
    }
    patch_positions(image.rows(), image.cols(), stride)
        .into_iter()
        .map(|(r, c)| {
            Ok(LabeledPatch {
                sample: extract_patch(image, r, c)?,
                label,
            })
        })
        .collect()
}

/// Training corpus plus a held-out pool from which evaluation sets are drawn.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Corpus,
    pub eval_pool: Vec<LabeledPatch>,
}

impl Dataset {
    pub fn n_classes(&self) -> usize {
        self.train.n_classes()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub image_size: usize,
    pub train_images_per_class: usize,
    pub eval_images_per_class: usize,
    pub noise_sigma: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_classes: 2,
            image_size: 96,
            train_images_per_class: 4,
            eval_images_per_class: 2,
            noise_sigma: synth::DEFAULT_NOISE_SIGMA,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 || self.n_classes > synth::MAX_SYNTH_CLASSES {
            return Err(Error::Config(format!(
                "synthetic n_classes must be in 2..={}, got {}",
                synth::MAX_SYNTH_CLASSES,
                self.n_classes
            )));
        }
        if self.image_size < patch::PATCH_SIZE {
            return Err(Error::Config(format!(
                "image_size {} is smaller than a {}-pixel patch",
                self.image_size,
                patch::PATCH_SIZE
            )));
        }
        if self.train_images_per_class == 0 || self.eval_images_per_class == 0 {
            return Err(Error::Config("need at least one train and one eval image per class".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        Ok(())
    }

    /// Renders every image of the spec as `(split, label, index, image)`.
    /// Train and eval images come from disjoint seed streams.
    pub fn render(&self, seed: u64) -> Result<Vec<(Split, usize, usize, GrayImage)>> {
        self.validate()?;
        let mut out = Vec::new();
        for (split, count, stream) in [
            (Split::Train, self.train_images_per_class, 0u64),
            (Split::Eval, self.eval_images_per_class, 1u64),
        ] {
            for class in 0..self.n_classes {
                for idx in 0..count {
                    let image_seed = derive_seed(seed, (stream << 48) | ((class as u64) << 24) | idx as u64);
                    let img = synth::synth_texture(
                        class,
                        self.n_classes,
                        self.image_size,
                        self.image_size,
                        image_seed,
                        self.noise_sigma,
                    )?;
                    out.push((split, class, idx, img));
                }
            }
        }
        Ok(out)
    }
}

pub fn build_synthetic(spec: &SyntheticSpec, stride: usize, seed: u64) -> Result<Dataset> {
    let mut train = Corpus::new(spec.n_classes);
    let mut eval_pool = Vec::new();
    for (split, label, _, img) in spec.render(seed)? {
        let patches = patches_from_image(&img, label, stride)?;
        match split {
            Split::Train => {
                for p in patches {
                    train.push(p)?;
                }
            }
            Split::Eval => eval_pool.extend(patches),
        }
    }
    Ok(Dataset { train, eval_pool })
}

/// Builds a dataset from manifest images. Entries with an explicit split go
/// to that side; patches of unsplit images are shuffled with `seed` and a
/// fraction `eval_fraction` of them is held out.
pub fn build_from_manifest(entries: &[ManifestEntry], stride: usize, eval_fraction: f64, seed: u64) -> Result<Dataset> {
    if entries.is_empty() {
        return Err(Error::Data("manifest lists no images".into()));
    }
    if !(0.0..1.0).contains(&eval_fraction) {
        return Err(Error::Config(format!("eval_fraction must be in [0, 1), got {eval_fraction}")));
    }
    let n_classes = entries.iter().map(|e| e.label).max().unwrap() + 1;
    let mut train = Corpus::new(n_classes);
    let mut eval_pool = Vec::new();
    let mut unsplit = Vec::new();
    for entry in entries {
        let img = load_image(&entry.path)?;
        let patches = patches_from_image(&img, entry.label, stride)?;
        match entry.split {
            Some(Split::Train) => {
                for p in patches {
                    train.push(p)?;
                }
            }
            Some(Split::Eval) => eval_pool.extend(patches),
            None => unsplit.extend(patches),
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    unsplit.shuffle(&mut rng);
    let n_eval = (unsplit.len() as f64 * eval_fraction).round() as usize;
    for (i, p) in unsplit.into_iter().enumerate() {
        if i < n_eval {
            eval_pool.push(p);
        } else {
            train.push(p)?;
        }
    }
    for c in 0..n_classes {
        if train.class(c).is_empty() {
            return Err(Error::Data(format!("no training patches for label {c}")));
        }
    }
    Ok(Dataset { train, eval_pool })
}

/// Deterministic label-balanced subset of `pool`: labels are visited
/// round-robin and patches within a label are taken in a seeded shuffled
/// order, so each label contributes `size / C` patches (give or take one)
/// while it has patches left.
pub fn select_eval_set(pool: &[LabeledPatch], n_classes: usize, size: usize, seed: u64) -> Result<Vec<LabeledPatch>> {
    if pool.is_empty() {
        return Err(Error::Data("evaluation pool is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_label: Vec<Vec<&LabeledPatch>> = vec![Vec::new(); n_classes];
    for p in pool {
        by_label
            .get_mut(p.label)
            .ok_or_else(|| Error::Data(format!("eval label {} out of range", p.label)))?
            .push(p);
    }
    for bucket in &mut by_label {
        bucket.shuffle(&mut rng);
        bucket.reverse();
    }
    let mut out = Vec::with_capacity(size);
    while out.len() < size && by_label.iter().any(|b| !b.is_empty()) {
        for bucket in by_label.iter_mut() {
            if out.len() == size {
                break;
            }
            if let Some(p) = bucket.pop() {
                out.push(p.clone());
            }
        }
    }
    Ok(out)
}

/// Images and index written by [`write_synthetic_corpus`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchIndexEntry {
    pub image: usize,
    pub row: usize,
    pub col: usize,
    pub label: usize,
}

/// Writes a corpus directory: `images/*.d4l` (raw format), `manifest.json`
/// and `patches.json` listing every patch corner per manifest image.
pub fn write_corpus(out_dir: &Path, entries_with_images: &[(ManifestEntry, GrayImage)], stride: usize) -> Result<Vec<PatchIndexEntry>> {
    let image_dir = out_dir.join("images");
    fs::create_dir_all(&image_dir).map_err(|e| Error::io(&image_dir, e))?;
    let mut manifest = Vec::with_capacity(entries_with_images.len());
    let mut index = Vec::new();
    for (i, (entry, img)) in entries_with_images.iter().enumerate() {
        let path = out_dir.join(&entry.path);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, encode_raw(img)).map_err(|e| Error::io(&path, e))?;
        manifest.push(entry.clone());
        for (row, col) in patch_positions(img.rows(), img.cols(), stride) {
            index.push(PatchIndexEntry {
                image: i,
                row,
                col,
                label: entry.label,
            });
        }
    }
    write_manifest(&out_dir.join("manifest.json"), &manifest)?;
    let index_path = out_dir.join("patches.json");
    let text = serde_json::to_string(&index).expect("index serializes");
    fs::write(&index_path, text + "\n").map_err(|e| Error::io(&index_path, e))?;
    Ok(index)
}

/// Renders a synthetic spec to disk via [`write_corpus`].
pub fn write_synthetic_corpus(out_dir: &Path, spec: &SyntheticSpec, stride: usize, seed: u64) -> Result<Vec<PatchIndexEntry>> {
    let rendered: Vec<(ManifestEntry, GrayImage)> = spec
        .render(seed)?
        .into_iter()
        .map(|(split, label, idx, img)| {
            let name = match split {
                Split::Train => format!("images/class{label}_train{idx}.d4l"),
                Split::Eval => format!("images/class{label}_eval{idx}.d4l"),
            };
            (
                ManifestEntry {
                    path: PathBuf::from(name),
                    label,
                    split: Some(split),
                },
                img,
            )
        })
        .collect();
    write_corpus(out_dir, &rendered, stride)
}

/// Loads manifest images (checking each is readable) and writes a patch
/// index next to the manifest's images in `out_dir`.
pub fn index_manifest(manifest: &Path, out_dir: &Path, stride: usize) -> Result<Vec<PatchIndexEntry>> {
    let entries = read_manifest(manifest)?;
    let loaded = entries
        .into_iter()
        .enumerate()
        .map(|(i, entry)| {
            let img = load_image(&entry.path)?;
            let copy = ManifestEntry {
                path: PathBuf::from(format!("images/image{i}.d4l")),
                label: entry.label,
                split: entry.split,
            };
            Ok((copy, img))
        })
        .collect::<Result<Vec<_>>>()?;
    write_corpus(out_dir, &loaded, stride)
}
