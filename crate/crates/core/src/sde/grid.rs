use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform time grid on `[t0, t1]` with `steps >= 1` intervals.
///
/// A zero-length horizon (`t1 == t0`) is admissible and produces constant
/// paths; otherwise grid points are strictly increasing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: f64,
    t1: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, steps: usize) -> Result<Self> {
        if !t0.is_finite() || !t1.is_finite() {
            return Err(Error::validation("grid endpoints must be finite"));
        }
        if t1 < t0 {
            return Err(Error::validation("horizon must not precede start time"));
        }
        if steps == 0 {
            return Err(Error::validation("grid needs at least one step"));
        }
        Ok(TimeGrid { t0, t1, steps })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / self.steps as f64
    }

    /// `k`-th grid point, exact at both endpoints.
    pub fn time(&self, k: usize) -> f64 {
        debug_assert!(k <= self.steps);
        if k == self.steps {
            self.t1
        } else {
            self.t0 + (self.t1 - self.t0) * (k as f64 / self.steps as f64)
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.t1 == self.t0
    }
}
