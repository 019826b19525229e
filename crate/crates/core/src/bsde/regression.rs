use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative standard-deviation floor below which a raw column is treated as
/// constant and dropped (the intercept already spans constants).
const STD_FLOOR: f64 = 1e-12;

/// Relative eigenvalue cutoff for the Gram pseudo-inverse.
const EIGEN_CUTOFF: f64 = 1e-12;

/// One cross-sectional least-squares factorization, reusable across targets.
///
/// Raw columns are standardized to zero mean and unit spread, near-constant
/// columns are dropped, and the normal equations are solved through a
/// truncated eigendecomposition of the Gram matrix. Truncation instead of
/// direct inversion keeps collinear bases (payoff features often are) from
/// amplifying noise.
pub struct RegressionPlan {
    /// Standardized design including the leading intercept, rows = samples.
    phi: DMatrix<f64>,
    /// Pseudo-inverse of `phi^T phi`.
    gram_pinv: DMatrix<f64>,
    /// Square root of the kept eigenvalue ratio; the design's effective
    /// condition number.
    pub condition: f64,
    /// Columns kept after dropping near-constant ones (intercept included).
    pub kept: usize,
    /// Raw columns dropped as effectively constant.
    pub dropped: usize,
    /// Gram eigenvalues zeroed by the relative cutoff.
    pub truncated: usize,
}

impl RegressionPlan {
    /// Builds a plan from a raw design with one row per sample. The intercept
    /// must not be part of `raw`; it is prepended after standardization.
    pub fn new(raw: &DMatrix<f64>) -> Result<Self> {
        let samples = raw.nrows();
        if samples < 2 {
            return Err(Error::validation("regression needs at least two samples"));
        }
        let mut kept_cols: Vec<DVector<f64>> = Vec::with_capacity(raw.ncols() + 1);
        kept_cols.push(DVector::from_element(samples, 1.0));
        let mut dropped = 0usize;
        for c in 0..raw.ncols() {
            let col = raw.column(c);
            let mean = col.sum() / samples as f64;
            let mut var = 0.0;
            for &v in col.iter() {
                if !v.is_finite() {
                    return Err(Error::numerics("non-finite value in regression design"));
                }
                var += (v - mean) * (v - mean);
            }
            let std = (var / samples as f64).sqrt();
            if std <= STD_FLOOR * (1.0 + mean.abs()) {
                dropped += 1;
                continue;
            }
            kept_cols.push(DVector::from_iterator(
                samples,
                col.iter().map(|&v| (v - mean) / std),
            ));
        }
        let kept = kept_cols.len();
        let phi = DMatrix::from_columns(&kept_cols);
        let gram = phi.transpose() * &phi;
        let eig = gram.symmetric_eigen();
        let lambda_max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        if !(lambda_max > 0.0) {
            return Err(Error::numerics("regression design is identically zero"));
        }
        let cutoff = EIGEN_CUTOFF * lambda_max;
        let mut truncated = 0usize;
        let mut lambda_min_kept = lambda_max;
        let mut inv = DVector::zeros(kept);
        for (i, &l) in eig.eigenvalues.iter().enumerate() {
            if l > cutoff {
                inv[i] = 1.0 / l;
                lambda_min_kept = lambda_min_kept.min(l);
            } else {
                truncated += 1;
            }
        }
        let gram_pinv =
            &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose();
        Ok(RegressionPlan {
            phi,
            gram_pinv,
            condition: (lambda_max / lambda_min_kept).sqrt(),
            kept,
            dropped,
            truncated,
        })
    }

    pub fn samples(&self) -> usize {
        self.phi.nrows()
    }

    /// Least-squares fitted values of `target` at the sample points.
    pub fn fit(&self, target: &[f64]) -> Result<Vec<f64>> {
        if target.len() != self.phi.nrows() {
            return Err(Error::validation("target length does not match design"));
        }
        let y = DVector::from_column_slice(target);
        let coeffs = &self.gram_pinv * (self.phi.transpose() * y);
        Ok((&self.phi * coeffs).as_slice().to_vec())
    }
}
