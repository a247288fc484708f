//! Thresholded deviation labels for a commanded/measured angular-velocity
//! stream.
//!
//! cargo run --release --example imu_labels

use d4l::data::imu::imu_threshold_labels;

fn main() -> d4l::Result<()> {
    let commanded: Vec<f64> = (0..12).map(|t| (t as f64 * 0.5).sin()).collect();
    let measured: Vec<f64> = commanded
        .iter()
        .enumerate()
        .map(|(t, w)| if (4..8).contains(&t) { w + 0.4 } else { w + 0.02 })
        .collect();
    let labels = imu_threshold_labels(&commanded, &measured, 0.25)?;
    for (t, ((c, m), y)) in commanded.iter().zip(&measured).zip(&labels).enumerate() {
        println!("t={t:<2} commanded {c:+.3} measured {m:+.3} label {y:+}");
    }
    Ok(())
}
