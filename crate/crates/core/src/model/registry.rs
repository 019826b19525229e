//! Descriptor registry for the three problem data slots: driver generators
//! `F(t, x, y, zbar)`, terminal payoffs `g(x)`, and obstacles `h(t, x)`.
//!
//! Descriptors are named families with numeric parameters rather than
//! arbitrary code, so configs stay language-agnostic and every solver
//! (probabilistic and PDE) evaluates exactly the same functions. All
//! evaluation happens in ranked coordinates: `x` is non-increasing and
//! `zbar[j]` belongs to rank `j`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CoefficientProfile;

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn default_rank() -> usize {
    1
}

/// Driver generator families. Every built-in is affine in `y`, which the
/// implicit solvers exploit through [`GeneratorKind::y_slope`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorKind {
    /// `F = 0`.
    Zero,
    /// `F = -r(t) * y` with the profile's short rate.
    Discount,
    /// `F = -(r(t) * y + sum_j (d_j - r(t)) / sigma_j * zbar_j)` where `d`
    /// are drifts of the underlying price processes. Used when the state is
    /// the log-price vector, whose profile carries the log drifts, so the
    /// price drifts are stored here explicitly.
    Pricing { price_drifts: Vec<f64> },
    /// `F = intercept + y_coeff * y + z_coeff . zbar` with constant
    /// (hence bounded) coefficients.
    Affine {
        intercept: f64,
        y_coeff: f64,
        z_coeff: Vec<f64>,
    },
}

impl GeneratorKind {
    pub fn validate_dims(&self, n: usize) -> Result<()> {
        match self {
            GeneratorKind::Zero | GeneratorKind::Discount => Ok(()),
            GeneratorKind::Pricing { price_drifts } => {
                if price_drifts.len() != n {
                    return Err(Error::validation(format!(
                        "pricing generator has {} drifts for n={}",
                        price_drifts.len(),
                        n
                    )));
                }
                if price_drifts.iter().any(|d| !d.is_finite()) {
                    return Err(Error::validation("pricing drifts must be finite"));
                }
                Ok(())
            }
            GeneratorKind::Affine {
                intercept,
                y_coeff,
                z_coeff,
            } => {
                if z_coeff.len() != n {
                    return Err(Error::validation(format!(
                        "affine generator has {} z-coefficients for n={}",
                        z_coeff.len(),
                        n
                    )));
                }
                if !intercept.is_finite()
                    || !y_coeff.is_finite()
                    || z_coeff.iter().any(|c| !c.is_finite())
                {
                    return Err(Error::validation("affine coefficients must be finite"));
                }
                Ok(())
            }
        }
    }

    pub fn eval(
        &self,
        t: f64,
        _ranked: &[f64],
        y: f64,
        zbar: &[f64],
        profile: &CoefficientProfile,
    ) -> f64 {
        match self {
            GeneratorKind::Zero => 0.0,
            GeneratorKind::Discount => -profile.rate.value(t) * y,
            GeneratorKind::Pricing { price_drifts } => {
                let r = profile.rate.value(t);
                let mut acc = r * y;
                for j in 0..zbar.len() {
                    acc += (price_drifts[j] - r) / profile.sigma[j] * zbar[j];
                }
                -acc
            }
            GeneratorKind::Affine {
                intercept,
                y_coeff,
                z_coeff,
            } => {
                intercept
                    + y_coeff * y
                    + z_coeff.iter().zip(zbar).map(|(c, z)| c * z).sum::<f64>()
            }
        }
    }

    /// Coefficient of `y` in `F`; exact because all built-ins are affine in
    /// `y`. The implicit time step divides by `1 - dt * y_slope`.
    pub fn y_slope(&self, t: f64, profile: &CoefficientProfile) -> f64 {
        match self {
            GeneratorKind::Zero => 0.0,
            GeneratorKind::Discount | GeneratorKind::Pricing { .. } => -profile.rate.value(t),
            GeneratorKind::Affine { y_coeff, .. } => *y_coeff,
        }
    }

    /// Declared joint Lipschitz constant in `(y, zbar)` for hypothesis (12)
    /// style bounds: `|dF| <= c (|dy| + |dz|)`.
    pub fn lipschitz(&self, profile: &CoefficientProfile) -> f64 {
        match self {
            GeneratorKind::Zero => 0.0,
            GeneratorKind::Discount => profile.rate.sup_abs(),
            GeneratorKind::Pricing { price_drifts } => {
                let prem = profile.risk_premium(price_drifts, 0.0);
                profile.rate.sup_abs() + l2(&prem)
            }
            GeneratorKind::Affine {
                y_coeff, z_coeff, ..
            } => y_coeff.abs().max(l2(z_coeff)),
        }
    }

    /// Declared constant for the linear-growth bound `|F(t,x,0,0)| <= c (1+|x|)`.
    pub fn growth(&self) -> f64 {
        match self {
            GeneratorKind::Zero | GeneratorKind::Discount | GeneratorKind::Pricing { .. } => 0.0,
            GeneratorKind::Affine { intercept, .. } => intercept.abs(),
        }
    }
}

/// Terminal payoff families `g` on ranked coordinates. `rank` parameters are
/// 1-based: `rank = 1` addresses the largest coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerminalKind {
    Constant {
        value: f64,
    },
    /// `g(x) = x_(rank)`.
    Coordinate {
        #[serde(default = "default_rank")]
        rank: usize,
    },
    /// `g(x) = (x_(1) - strike)^+`.
    RankedTopCall {
        strike: f64,
    },
    /// `g(x) = sum_j x_(j)`.
    Sum,
    /// `g(x) = (sum_j x_(j) - strike)^+`.
    BasketCall {
        strike: f64,
    },
    /// Put on an exponentiated coordinate, `(strike - exp(x_(rank)))^+`.
    /// This is the natural payoff when the state is a log-price vector.
    PutLog {
        strike: f64,
        #[serde(default = "default_rank")]
        rank: usize,
    },
    /// Call on an exponentiated coordinate, `(exp(x_(rank)) - strike)^+`.
    CallLog {
        strike: f64,
        #[serde(default = "default_rank")]
        rank: usize,
    },
    /// `g(x) = exp(x_(rank))`; the ranked price itself in log coordinates.
    ExpCoordinate {
        #[serde(default = "default_rank")]
        rank: usize,
    },
    /// `g(x) = sum_j weights_j * exp(x_(j))`.
    ExpBasket {
        weights: Vec<f64>,
    },
    /// `g(x) = (sum_j weights_j * exp(x_(j)) - strike)^+`.
    ExpBasketCall {
        weights: Vec<f64>,
        strike: f64,
    },
}

fn check_weights(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::validation(format!(
            "basket has {} weights for n={}",
            weights.len(),
            n
        )));
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::validation("basket weights must be finite"));
    }
    Ok(())
}

impl TerminalKind {
    pub fn validate_dims(&self, n: usize) -> Result<()> {
        let check_rank = |rank: usize| {
            if rank == 0 || rank > n {
                Err(Error::validation(format!(
                    "rank {} out of range for n={}",
                    rank, n
                )))
            } else {
                Ok(())
            }
        };
        let check_strike = |strike: f64| {
            if !strike.is_finite() || strike < 0.0 {
                Err(Error::validation("strike must be finite and non-negative"))
            } else {
                Ok(())
            }
        };
        match self {
            TerminalKind::Constant { value } if !value.is_finite() => {
                Err(Error::validation("terminal constant must be finite"))
            }
            TerminalKind::Coordinate { rank } | TerminalKind::ExpCoordinate { rank } => {
                check_rank(*rank)
            }
            TerminalKind::PutLog { rank, strike } | TerminalKind::CallLog { rank, strike } => {
                check_rank(*rank)?;
                check_strike(*strike)
            }
            TerminalKind::RankedTopCall { strike } | TerminalKind::BasketCall { strike } => {
                check_strike(*strike)
            }
            TerminalKind::ExpBasket { weights } => check_weights(weights, n),
            TerminalKind::ExpBasketCall { weights, strike } => {
                check_weights(weights, n)?;
                check_strike(*strike)
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, ranked: &[f64]) -> f64 {
        match self {
            TerminalKind::Constant { value } => *value,
            TerminalKind::Coordinate { rank } => ranked[rank - 1],
            TerminalKind::RankedTopCall { strike } => (ranked[0] - strike).max(0.0),
            TerminalKind::Sum => ranked.iter().sum(),
            TerminalKind::BasketCall { strike } => {
                (ranked.iter().sum::<f64>() - strike).max(0.0)
            }
            TerminalKind::PutLog { strike, rank } => {
                (strike - ranked[rank - 1].exp()).max(0.0)
            }
            TerminalKind::CallLog { strike, rank } => {
                (ranked[rank - 1].exp() - strike).max(0.0)
            }
            TerminalKind::ExpCoordinate { rank } => ranked[rank - 1].exp(),
            TerminalKind::ExpBasket { weights } => weights
                .iter()
                .zip(ranked)
                .map(|(w, x)| w * x.exp())
                .sum(),
            TerminalKind::ExpBasketCall { weights, strike } => (weights
                .iter()
                .zip(ranked)
                .map(|(w, x)| w * x.exp())
                .sum::<f64>()
                - strike)
                .max(0.0),
        }
    }

    /// Declared global Lipschitz constant in the state, when one exists.
    /// Exponential payoffs return `None`: they are Lipschitz in price
    /// coordinates but only locally Lipschitz after the log transform.
    pub fn lipschitz(&self, n: usize) -> Option<f64> {
        match self {
            TerminalKind::Constant { .. } => Some(0.0),
            TerminalKind::Coordinate { .. } | TerminalKind::RankedTopCall { .. } => Some(1.0),
            TerminalKind::Sum | TerminalKind::BasketCall { .. } => Some((n as f64).sqrt()),
            // The put slope is -exp(x) on {exp(x) < strike}, bounded by the strike.
            TerminalKind::PutLog { strike, .. } => Some(*strike),
            TerminalKind::CallLog { .. }
            | TerminalKind::ExpCoordinate { .. }
            | TerminalKind::ExpBasket { .. }
            | TerminalKind::ExpBasketCall { .. } => None,
        }
    }
}

/// Obstacle families `h(t, x)`. `None` is the sentinel for an unconstrained
/// problem and evaluates to negative infinity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObstacleKind {
    None,
    Constant { value: f64 },
    /// `h(t, x) = g(x)` held flat in time.
    Payoff,
    /// `h(t, x) = exp(-int_t^T r) * g(x)`.
    DiscountedPayoff,
}

impl ObstacleKind {
    pub fn is_none(&self) -> bool {
        matches!(self, ObstacleKind::None)
    }

    pub fn validate_dims(&self, _n: usize) -> Result<()> {
        match self {
            ObstacleKind::Constant { value } if !value.is_finite() => {
                Err(Error::validation("obstacle constant must be finite"))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(
        &self,
        t: f64,
        ranked: &[f64],
        terminal: &TerminalKind,
        profile: &CoefficientProfile,
        horizon: f64,
    ) -> f64 {
        match self {
            ObstacleKind::None => f64::NEG_INFINITY,
            ObstacleKind::Constant { value } => *value,
            ObstacleKind::Payoff => terminal.eval(ranked),
            ObstacleKind::DiscountedPayoff => {
                (-profile.rate.integral(t, horizon)).exp() * terminal.eval(ranked)
            }
        }
    }

    /// Declared polynomial upper bound `h <= c (1 + |x|^p)`, when one can be
    /// stated from the terminal descriptor. `None` means the check is skipped
    /// and noted (exponential payoffs are bounded in price coordinates
    /// instead).
    pub fn growth_bound(
        &self,
        terminal: &TerminalKind,
        profile: &CoefficientProfile,
        horizon: f64,
        n: usize,
    ) -> Option<(f64, i32)> {
        let payoff_bound = || {
            terminal.lipschitz(n).map(|lip| {
                let g0 = terminal.eval(&vec![0.0; n]).abs();
                (g0.max(lip), 1)
            })
        };
        match self {
            ObstacleKind::None => Some((0.0, 0)),
            ObstacleKind::Constant { value } => Some((value.max(0.0), 0)),
            ObstacleKind::Payoff => payoff_bound(),
            ObstacleKind::DiscountedPayoff => payoff_bound().map(|(c, p)| {
                // A negative rate inflates the discount factor up to
                // exp(sup |r| * horizon).
                (c * (profile.rate.sup_abs() * horizon).exp(), p)
            }),
        }
    }
}
