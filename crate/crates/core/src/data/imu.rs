use crate::error::{Error, Result};

/// Labels each time step `+1` when the commanded and measured angular
/// velocities differ by at least `gamma`, `-1` otherwise.
pub fn imu_threshold_labels(commanded: &[f64], measured: &[f64], gamma: f64) -> Result<Vec<i8>> {
    if commanded.len() != measured.len() {
        return Err(Error::Shape(format!(
            "commanded has {} samples, measured {}",
            commanded.len(),
            measured.len()
        )));
    }
    if !(gamma > 0.0) {
        return Err(Error::Input(format!("threshold must be positive, got {gamma}")));
    }
    Ok(commanded
        .iter()
        .zip(measured)
        .map(|(c, m)| if (c - m).abs() >= gamma { 1 } else { -1 })
        .collect())
}
