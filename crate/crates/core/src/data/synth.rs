//! Synthetic oriented-grating textures used as a stand-in image source.
//!
//! Class `c` (0-indexed, `C` classes) is a grating oriented at
//! `(c + 1) * pi / C`. The profile is a sinusoid raised to the third power,
//! giving thin bright ridges on a dark ground. A plain sinusoid would not do:
//! its negation is a phase shift of itself, so codes of randomly placed
//! patches would be sign-symmetric and carry no linear class signal.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::image::GrayImage;
use crate::error::{Error, Result};

pub const MAX_SYNTH_CLASSES: usize = 8;
/// Ridge spacing in pixels.
pub const GRATING_PERIOD: f64 = 8.0;
pub const DEFAULT_NOISE_SIGMA: f64 = 0.1;

const FLOOR: f64 = 0.1;
const CONTRAST: f64 = 0.8;

/// Noise-free pixel value of class `class` at `(row, col)`.
pub fn grating_value(class: usize, n_classes: usize, row: usize, col: usize) -> f64 {
    let theta = (class + 1) as f64 * std::f64::consts::PI / n_classes as f64;
    let u = col as f64 * theta.cos() + row as f64 * theta.sin();
    let wave = 0.5 * (1.0 + (2.0 * std::f64::consts::PI * u / GRATING_PERIOD).sin());
    FLOOR + CONTRAST * wave.powi(3)
}

/// Renders one texture image. Gaussian pixel noise of standard deviation
/// `noise_sigma` is added and the result clipped to `[0, 1]`.
pub fn synth_texture(
    class: usize,
    n_classes: usize,
    rows: usize,
    cols: usize,
    seed: u64,
    noise_sigma: f64,
) -> Result<GrayImage> {
    if n_classes == 0 || n_classes > MAX_SYNTH_CLASSES {
        return Err(Error::Input(format!(
            "synthetic textures support 1..={MAX_SYNTH_CLASSES} classes, got {n_classes}"
        )));
    }
    if class >= n_classes {
        return Err(Error::Input(format!(
            "class {class} out of range for {n_classes} classes"
        )));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Input(format!("noise sigma must be >= 0, got {noise_sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sigma).expect("validated sigma");
    Ok(GrayImage::from_fn(rows, cols, |r, c| {
        let clean = grating_value(class, n_classes, r, c);
        let v = if noise_sigma > 0.0 {
            clean + noise.sample(&mut rng)
        } else {
            clean
        };
        v.clamp(0.0, 1.0)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_origin_pixel() {
        let img = synth_texture(1, 4, 16, 16, 0, 0.0).unwrap();
        // sin(0) = 0 -> wave = 1/2 -> 0.1 + 0.8 / 8
        assert!((img.get(0, 0) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn noiseless_matches_closed_form() {
        let img = synth_texture(0, 2, 10, 10, 3, 0.0).unwrap();
        // class 0 of 2: theta = pi/2, depends on the row only
        let expected = 0.1 + 0.8 * (0.5 * (1.0 + (2.0 * std::f64::consts::PI * 3.0 / 8.0).sin())).powi(3);
        assert!((img.get(3, 7) - expected).abs() < 1e-12);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synth_texture(2, 4, 32, 32, 9, 0.1).unwrap();
        let b = synth_texture(2, 4, 32, 32, 9, 0.1).unwrap();
        assert_eq!(a, b);
        let c = synth_texture(2, 4, 32, 32, 10, 0.1).unwrap();
        assert_ne!(a, c);
        assert!(a.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn class_out_of_range() {
        assert!(synth_texture(4, 4, 8, 8, 0, 0.1).is_err());
        assert!(synth_texture(0, 9, 8, 8, 0, 0.1).is_err());
    }
}
