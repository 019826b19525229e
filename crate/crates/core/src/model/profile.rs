use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Short rate curve. Only a constant rate is built in; the enum leaves room
/// for richer curves without touching call sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateCurve {
    Constant { value: f64 },
}

impl RateCurve {
    pub fn value(&self, _t: f64) -> f64 {
        match self {
            RateCurve::Constant { value } => *value,
        }
    }

    /// Integral of the rate over `[t0, t1]`.
    pub fn integral(&self, t0: f64, t1: f64) -> f64 {
        match self {
            RateCurve::Constant { value } => value * (t1 - t0),
        }
    }

    /// Supremum of `|r|`, used in declared Lipschitz constants.
    pub fn sup_abs(&self) -> f64 {
        match self {
            RateCurve::Constant { value } => value.abs(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RateCurve::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::validation("rate value must be finite"));
                }
            }
        }
        Ok(())
    }
}

/// True iff the squared-volatility sequence is discretely concave:
/// `s[i+1] >= (s[i] + s[i+2]) / 2` for every interior window. Vacuously true
/// for fewer than three entries.
pub fn check_concavity(sigma_sq: &[f64]) -> bool {
    sigma_sq
        .windows(3)
        .all(|w| w[1] >= 0.5 * (w[0] + w[2]))
}

/// Per-rank drift and volatility assignments plus the short rate.
///
/// The concavity of `sigma^2` decides whether triple collisions are excluded
/// and is checked once at construction; engines consult the stored flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientProfile {
    pub n: usize,
    pub delta: Vec<f64>,
    pub sigma: Vec<f64>,
    pub rate: RateCurve,
    #[serde(skip)]
    concave: bool,
}

impl CoefficientProfile {
    pub fn new(delta: Vec<f64>, sigma: Vec<f64>, rate: RateCurve) -> Result<Self> {
        let n = delta.len();
        if n == 0 {
            return Err(Error::validation("profile needs at least one rank"));
        }
        if sigma.len() != n {
            return Err(Error::validation(format!(
                "delta has {} entries but sigma has {}",
                n,
                sigma.len()
            )));
        }
        if delta.iter().any(|d| !d.is_finite()) {
            return Err(Error::validation("drift entries must be finite"));
        }
        if sigma.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::validation(
                "volatility entries must be finite and strictly positive",
            ));
        }
        rate.validate()?;
        let sq: Vec<f64> = sigma.iter().map(|s| s * s).collect();
        let concave = check_concavity(&sq);
        Ok(CoefficientProfile {
            n,
            delta,
            sigma,
            rate,
            concave,
        })
    }

    /// Whether `sigma^2` is discretely concave across ranks.
    pub fn is_concave(&self) -> bool {
        self.concave
    }

    pub fn sigma_sq(&self) -> Vec<f64> {
        self.sigma.iter().map(|s| s * s).collect()
    }

    /// Risk-premium vector `(price_drift_j - r) / sigma_j` at time `t`.
    pub fn risk_premium(&self, price_drifts: &[f64], t: f64) -> Vec<f64> {
        let r = self.rate.value(t);
        price_drifts
            .iter()
            .zip(&self.sigma)
            .map(|(d, s)| (d - r) / s)
            .collect()
    }
}
