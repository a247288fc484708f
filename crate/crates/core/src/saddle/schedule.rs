use crate::error::{Error, Result};

/// Constant step `eps0` up to iteration `t0`, then `eps0 * t0 / t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    pub eps0: f64,
    pub t0: usize,
}

impl StepSchedule {
    pub fn new(eps0: f64, t0: usize) -> Result<Self> {
        if !(eps0 > 0.0 && eps0.is_finite()) {
            return Err(Error::Config(format!("eps0 must be positive, got {eps0}")));
        }
        if t0 == 0 {
            return Err(Error::Config("t0 must be at least 1".into()));
        }
        Ok(StepSchedule { eps0, t0 })
    }

    /// Step size at iteration `t >= 1`.
    pub fn step_size(&self, t: usize) -> Result<f64> {
        if t == 0 {
            return Err(Error::Input("step sizes are indexed from t = 1".into()));
        }
        Ok(self.eps0.min(self.eps0 * self.t0 as f64 / t as f64))
    }
}
