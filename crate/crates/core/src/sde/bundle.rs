use std::io::Write;

use crate::error::{Error, Result};
use crate::sde::TimeGrid;

/// Aggregate statistics collected while producing or post-processing a
/// bundle.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BundleDiagnostics {
    /// Count of (path, grid point) pairs whose ranked state holds an exact
    /// adjacent tie.
    pub tie_events: usize,
    /// Count of (path, grid point) pairs where two adjacent gaps are both
    /// below the proximity threshold; the discrete shadow of a triple
    /// collision. Only expected to be nonzero for non-concave profiles.
    pub triple_proximity_events: usize,
    /// Grid points inspected (`paths * (steps + 1)`).
    pub observations: usize,
    /// Total negative local-time increment mass removed by clipping.
    pub clipped_mass: f64,
}

/// Simulated path data in named coordinates plus the per-step rank
/// permutations needed to read everything in ranked coordinates.
///
/// Storage is flat and path-major. Ranked states and ranked driver
/// increments are derived on demand from `x`, `dw` and `perm`; cumulative
/// local times are filled in by [`crate::sde::estimate_local_times`].
#[derive(Debug, Clone)]
pub struct PathBundle {
    pub grid: TimeGrid,
    pub n: usize,
    pub paths: usize,
    pub seed: u64,
    /// Softmin temperature parameter when produced by the smoothed
    /// simulator.
    pub smoothing: Option<f64>,
    /// Named states, `[path][0..=steps][particle]`.
    pub(crate) x: Vec<f64>,
    /// Brownian increments, `[path][0..steps][particle]`.
    pub(crate) dw: Vec<f64>,
    /// Rank of each named particle, `[path][0..=steps][particle]`.
    pub(crate) perm: Vec<u8>,
    /// Cumulative local times per adjacent pair, `[path][0..=steps][pair]`.
    pub(crate) lambda: Option<Vec<f64>>,
    pub diagnostics: BundleDiagnostics,
}

impl PathBundle {
    pub(crate) fn state_index(&self, path: usize, k: usize) -> usize {
        (path * (self.grid.steps() + 1) + k) * self.n
    }

    pub(crate) fn incr_index(&self, path: usize, k: usize) -> usize {
        (path * self.grid.steps() + k) * self.n
    }

    /// Named state at grid point `k`.
    pub fn state(&self, path: usize, k: usize) -> &[f64] {
        let i = self.state_index(path, k);
        &self.x[i..i + self.n]
    }

    /// Brownian increment over `[t_k, t_{k+1}]`.
    pub fn increments(&self, path: usize, k: usize) -> &[f64] {
        let i = self.incr_index(path, k);
        &self.dw[i..i + self.n]
    }

    /// Rank occupied by each named particle at grid point `k`.
    pub fn ranks(&self, path: usize, k: usize) -> &[u8] {
        let i = self.state_index(path, k);
        &self.perm[i..i + self.n]
    }

    /// State sorted non-increasing, written into `out`.
    pub fn ranked_state_into(&self, path: usize, k: usize, out: &mut [f64]) {
        let x = self.state(path, k);
        let p = self.ranks(path, k);
        for i in 0..self.n {
            out[p[i] as usize] = x[i];
        }
    }

    pub fn ranked_state(&self, path: usize, k: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.ranked_state_into(path, k, &mut out);
        out
    }

    /// Ranked driver increments over `[t_k, t_{k+1}]`: the increment of the
    /// particle occupying each rank at the start of the step.
    pub fn ranked_increments_into(&self, path: usize, k: usize, out: &mut [f64]) {
        let dw = self.increments(path, k);
        let p = self.ranks(path, k);
        for i in 0..self.n {
            out[p[i] as usize] = dw[i];
        }
    }

    pub fn ranked_increments(&self, path: usize, k: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.ranked_increments_into(path, k, &mut out);
        out
    }

    /// Cumulative local times per adjacent pair at grid point `k`, when
    /// estimated. Pair `j` tracks the contact of ranks `j+1` and `j+2`
    /// (1-based); the outer boundary pairs are identically zero and not
    /// stored.
    pub fn local_times(&self, path: usize, k: usize) -> Option<&[f64]> {
        self.lambda.as_ref().map(|l| {
            let pairs = self.n - 1;
            let i = (path * (self.grid.steps() + 1) + k) * pairs;
            &l[i..i + pairs]
        })
    }

    pub fn has_local_times(&self) -> bool {
        self.lambda.is_some()
    }

    /// Exact adjacent-tie fraction over all (path, grid point) pairs.
    pub fn tie_fraction(&self) -> f64 {
        if self.diagnostics.observations == 0 {
            return 0.0;
        }
        self.diagnostics.tie_events as f64 / self.diagnostics.observations as f64
    }

    /// Streams one row per (path, grid point): named states, ranked states,
    /// ranked driver increments (zero on the terminal row), and cumulative
    /// local times when present.
    pub fn write_paths_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.n;
        let pairs = n.saturating_sub(1);
        let mut header = String::from("path_id,k,t");
        for i in 1..=n {
            header.push_str(&format!(",x_{i}"));
        }
        for j in 1..=n {
            header.push_str(&format!(",ranked_{j}"));
        }
        for j in 1..=n {
            header.push_str(&format!(",dbeta_{j}"));
        }
        if self.lambda.is_some() {
            for j in 1..=pairs {
                header.push_str(&format!(",lambda_{j}_{}", j + 1));
            }
        }
        writeln!(w, "{header}")?;
        let mut ranked = vec![0.0; n];
        let mut dbeta = vec![0.0; n];
        for p in 0..self.paths {
            for k in 0..=self.grid.steps() {
                let mut row = format!("{},{},{}", p, k, self.grid.time(k));
                for v in self.state(p, k) {
                    row.push_str(&format!(",{v}"));
                }
                self.ranked_state_into(p, k, &mut ranked);
                for v in &ranked {
                    row.push_str(&format!(",{v}"));
                }
                if k < self.grid.steps() {
                    self.ranked_increments_into(p, k, &mut dbeta);
                } else {
                    dbeta.iter_mut().for_each(|v| *v = 0.0);
                }
                for v in &dbeta {
                    row.push_str(&format!(",{v}"));
                }
                if let Some(l) = self.local_times(p, k) {
                    for v in l {
                        row.push_str(&format!(",{v}"));
                    }
                }
                writeln!(w, "{row}")?;
            }
        }
        Ok(())
    }

    /// Bitwise equality of the stochastic content; used by determinism
    /// checks.
    pub fn content_eq(&self, other: &PathBundle) -> bool {
        self.n == other.n
            && self.paths == other.paths
            && self.x == other.x
            && self.dw == other.dw
            && self.perm == other.perm
            && self.lambda == other.lambda
    }

    /// Validates dimensional compatibility with a profile of size `n`.
    pub fn check_dims(&self, n: usize) -> Result<()> {
        if self.n != n {
            return Err(Error::validation(format!(
                "bundle has {} particles but profile expects {}",
                self.n, n
            )));
        }
        Ok(())
    }
}
