use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Uniform time grid `t_k = k Δt`, `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    dt: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("dt", format!("must be positive and finite, got {dt}")));
        }
        if steps < 2 {
            return Err(invalid("steps", format!("need at least 2 steps, got {steps}")));
        }
        Ok(Self { dt, steps })
    }

    /// Grid covering `[0, t_max]` with a step no larger than `dt_max`.
    pub fn covering(t_max: f64, dt_max: f64) -> Result<Self> {
        let steps = (t_max / dt_max).ceil().max(2.0) as usize;
        Self::new(t_max / steps as f64, steps)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn t_max(&self) -> f64 {
        self.t(self.steps)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|k| self.t(k))
    }

    pub(crate) fn check_len(&self, n: usize, what: &str) -> Result<()> {
        if n != self.len() {
            return Err(crate::Error::GridMismatch(format!("{what}: {n} samples on a {}-point grid", self.len())));
        }
        Ok(())
    }
}
