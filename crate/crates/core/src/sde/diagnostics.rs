use serde::Serialize;

use crate::error::{Error, Result};
use crate::sde::bundle::PathBundle;
use crate::util::{mean, std_error};

/// Sample quadratic covariation of the ranked driver increments, normalized
/// by the horizon. Independent unit drivers per rank give the identity
/// matrix, so deviations measure how far the reconstructed drivers are from
/// an orthogonal Brownian family.
#[derive(Debug, Clone, Serialize)]
pub struct QvReport {
    pub n: usize,
    mean: Vec<f64>,
    stderr: Vec<f64>,
}

impl QvReport {
    pub fn mean(&self, i: usize, j: usize) -> f64 {
        self.mean[i * self.n + j]
    }

    pub fn stderr(&self, i: usize, j: usize) -> f64 {
        self.stderr[i * self.n + j]
    }

    /// Largest absolute off-diagonal entry.
    pub fn max_offdiag(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    worst = worst.max(self.mean(i, j).abs());
                }
            }
        }
        worst
    }

    /// Largest absolute deviation of a diagonal entry from one.
    pub fn max_diag_deviation(&self) -> f64 {
        (0..self.n)
            .map(|i| (self.mean(i, i) - 1.0).abs())
            .fold(0.0f64, f64::max)
    }
}

/// Computes the normalized quadratic covariation report for a bundle.
/// Reductions are sequential so the report is identical for any worker count.
pub fn ranked_brownian_diagnostics(bundle: &PathBundle) -> Result<QvReport> {
    if bundle.grid.is_degenerate() {
        return Err(Error::validation(
            "quadratic covariation needs a positive horizon",
        ));
    }
    let n = bundle.n;
    let steps = bundle.grid.steps();
    let span = bundle.grid.t1() - bundle.grid.t0();
    let mut per_entry: Vec<Vec<f64>> = vec![Vec::with_capacity(bundle.paths); n * n];
    let mut dbeta = vec![0.0f64; n];
    let mut acc = vec![0.0f64; n * n];
    for path in 0..bundle.paths {
        acc.fill(0.0);
        for k in 0..steps {
            bundle.ranked_increments_into(path, k, &mut dbeta);
            for i in 0..n {
                for j in i..n {
                    acc[i * n + j] += dbeta[i] * dbeta[j];
                }
            }
        }
        for i in 0..n {
            for j in i..n {
                let v = acc[i * n + j] / span;
                per_entry[i * n + j].push(v);
                if i != j {
                    per_entry[j * n + i].push(v);
                }
            }
        }
    }
    let mean_v: Vec<f64> = per_entry.iter().map(|e| mean(e)).collect();
    let stderr_v: Vec<f64> = per_entry.iter().map(|e| std_error(e)).collect();
    Ok(QvReport {
        n,
        mean: mean_v,
        stderr: stderr_v,
    })
}

/// Mean over paths of the squared running supremum of the state norm.
pub fn mean_sup_sq_norm(bundle: &PathBundle) -> f64 {
    let steps = bundle.grid.steps();
    let mut acc = 0.0f64;
    for path in 0..bundle.paths {
        let mut sup = 0.0f64;
        for k in 0..=steps {
            let sq: f64 = bundle.state(path, k).iter().map(|x| x * x).sum();
            sup = sup.max(sq);
        }
        acc += sup;
    }
    acc / bundle.paths as f64
}

fn check_matched(a: &PathBundle, b: &PathBundle) -> Result<()> {
    if a.n != b.n || a.paths != b.paths || a.grid.steps() != b.grid.steps() {
        return Err(Error::validation(
            "bundles have different shapes and cannot be compared pathwise",
        ));
    }
    Ok(())
}

/// Mean over paths of the squared running supremum of the state difference
/// between two bundles with matched shape (same seed, different data).
pub fn mean_sup_sq_diff(a: &PathBundle, b: &PathBundle) -> Result<f64> {
    check_matched(a, b)?;
    let steps = a.grid.steps();
    let mut acc = 0.0f64;
    for path in 0..a.paths {
        let mut sup = 0.0f64;
        for k in 0..=steps {
            let xa = a.state(path, k);
            let xb = b.state(path, k);
            let sq: f64 = xa
                .iter()
                .zip(xb)
                .map(|(u, v)| (u - v) * (u - v))
                .sum();
            sup = sup.max(sq);
        }
        acc += sup;
    }
    Ok(acc / a.paths as f64)
}

/// Largest componentwise state gap between two matched bundles.
pub fn max_step_gap(a: &PathBundle, b: &PathBundle) -> Result<f64> {
    check_matched(a, b)?;
    let steps = a.grid.steps();
    let mut worst = 0.0f64;
    for path in 0..a.paths {
        for k in 0..=steps {
            let xa = a.state(path, k);
            let xb = b.state(path, k);
            for (u, v) in xa.iter().zip(xb) {
                worst = worst.max((u - v).abs());
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CoefficientProfile, RateCurve, SimplexPoint};
    use crate::sde::{simulate, TimeGrid};

    fn profile(delta: Vec<f64>, sigma: Vec<f64>) -> CoefficientProfile {
        CoefficientProfile::new(delta, sigma, RateCurve::Constant { value: 0.0 }).unwrap()
    }

    #[test]
    fn ranked_drivers_have_identity_covariation() {
        let p = profile(vec![0.2, -0.2], vec![1.0, 0.8]);
        let x0 = SimplexPoint::new(vec![0.5, -0.5]).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 128).unwrap();
        let b = simulate(&p, &x0, &grid, 4_000, 29).unwrap();
        let qv = ranked_brownian_diagnostics(&b).unwrap();
        assert!(qv.max_diag_deviation() < 0.05, "{}", qv.max_diag_deviation());
        assert!(qv.max_offdiag() < 0.05, "{}", qv.max_offdiag());
        assert!(qv.stderr(0, 0) > 0.0);
    }

    #[test]
    fn single_particle_quadratic_variation_matches_span() {
        let p = profile(vec![0.3], vec![1.0]);
        let x0 = SimplexPoint::new(vec![1.0]).unwrap();
        let grid = TimeGrid::new(0.0, 2.0, 256).unwrap();
        let b = simulate(&p, &x0, &grid, 5_000, 31).unwrap();
        let qv = ranked_brownian_diagnostics(&b).unwrap();
        assert!(
            qv.max_diag_deviation() < 0.02,
            "relative deviation {}",
            qv.max_diag_deviation()
        );
    }

    #[test]
    fn sup_norm_moment_is_in_the_brownian_band() {
        // For a single driftless unit particle from zero the mean squared
        // sup over [0, 1] sits strictly between the terminal second moment
        // and its Doob bound.
        let p = profile(vec![0.0], vec![1.0]);
        let x0 = SimplexPoint::new(vec![0.0]).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 128).unwrap();
        let b = simulate(&p, &x0, &grid, 50_000, 5).unwrap();
        let m = mean_sup_sq_norm(&b);
        assert!(m > 1.1 && m < 4.0, "mean sup square {m}");
    }

    #[test]
    fn identical_bundles_compare_to_zero() {
        let p = profile(vec![0.1, -0.1], vec![1.0, 0.9]);
        let x0 = SimplexPoint::new(vec![0.2, -0.2]).unwrap();
        let grid = TimeGrid::new(0.0, 0.5, 16).unwrap();
        let a = simulate(&p, &x0, &grid, 100, 8).unwrap();
        let b = simulate(&p, &x0, &grid, 100, 8).unwrap();
        assert_eq!(mean_sup_sq_diff(&a, &b).unwrap(), 0.0);
        assert_eq!(max_step_gap(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let p = profile(vec![0.1, -0.1], vec![1.0, 0.9]);
        let x0 = SimplexPoint::new(vec![0.2, -0.2]).unwrap();
        let grid = TimeGrid::new(0.0, 0.5, 16).unwrap();
        let a = simulate(&p, &x0, &grid, 100, 8).unwrap();
        let b = simulate(&p, &x0, &grid, 50, 8).unwrap();
        assert!(mean_sup_sq_diff(&a, &b).is_err());
        let degenerate = TimeGrid::new(0.0, 0.0, 1).unwrap();
        let d = simulate(&p, &x0, &degenerate, 10, 8).unwrap();
        assert!(ranked_brownian_diagnostics(&d).is_err());
    }
}
