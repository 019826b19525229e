use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptionSide {
    Put,
    Call,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExerciseStyle {
    European,
    American,
}

/// Cox-Ross-Rubinstein tree price for a single stock under geometric
/// dynamics with constant volatility and rate. Independent of the Monte
/// Carlo stack; used only as a verification oracle.
pub fn binomial_price(
    spot: f64,
    strike: f64,
    rate: f64,
    sigma: f64,
    horizon: f64,
    steps: usize,
    side: OptionSide,
    style: ExerciseStyle,
) -> Result<f64> {
    if !spot.is_finite() || spot <= 0.0 {
        return Err(Error::validation("spot must be positive"));
    }
    if !strike.is_finite() || strike < 0.0 {
        return Err(Error::validation("strike must be finite and non-negative"));
    }
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::validation("volatility must be positive"));
    }
    if !rate.is_finite() || !horizon.is_finite() || horizon < 0.0 {
        return Err(Error::validation("rate and horizon must be finite, horizon >= 0"));
    }
    if steps == 0 {
        return Err(Error::validation("tree needs at least one step"));
    }
    let intrinsic = |p: f64| match side {
        OptionSide::Put => (strike - p).max(0.0),
        OptionSide::Call => (p - strike).max(0.0),
    };
    if horizon == 0.0 {
        return Ok(intrinsic(spot));
    }

    let dt = horizon / steps as f64;
    let up = (sigma * dt.sqrt()).exp();
    let down = 1.0 / up;
    let growth = (rate * dt).exp();
    let q = (growth - down) / (up - down);
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::validation(format!(
            "risk-neutral up probability {q:.6} outside [0, 1]; \
             reduce dt or the rate-volatility mismatch"
        )));
    }
    let disc = (-rate * dt).exp();

    // Terminal layer: node j has j up-moves.
    let mut value: Vec<f64> = (0..=steps)
        .map(|j| intrinsic(spot * up.powi(j as i32) * down.powi((steps - j) as i32)))
        .collect();
    for k in (0..steps).rev() {
        for j in 0..=k {
            let cont = disc * (q * value[j + 1] + (1.0 - q) * value[j]);
            value[j] = match style {
                ExerciseStyle::European => cont,
                ExerciseStyle::American => {
                    let p = spot * up.powi(j as i32) * down.powi((k - j) as i32);
                    cont.max(intrinsic(p))
                }
            };
        }
    }
    Ok(value[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_volatility_returns_intrinsic_value() {
        let c = binomial_price(
            200.0,
            100.0,
            0.0,
            0.01,
            1.0,
            500,
            OptionSide::Call,
            ExerciseStyle::European,
        )
        .unwrap();
        assert!((c - 100.0).abs() < 0.1, "deep ITM call {c}");
    }

    #[test]
    fn american_call_without_dividends_matches_european() {
        let eu = binomial_price(
            100.0,
            100.0,
            0.05,
            0.2,
            1.0,
            2000,
            OptionSide::Call,
            ExerciseStyle::European,
        )
        .unwrap();
        let am = binomial_price(
            100.0,
            100.0,
            0.05,
            0.2,
            1.0,
            2000,
            OptionSide::Call,
            ExerciseStyle::American,
        )
        .unwrap();
        assert!((am - eu).abs() < 1e-6, "early exercise premium {}", am - eu);
    }

    #[test]
    fn european_put_call_parity_holds() {
        let c = binomial_price(
            100.0,
            95.0,
            0.05,
            0.2,
            1.0,
            2000,
            OptionSide::Call,
            ExerciseStyle::European,
        )
        .unwrap();
        let p = binomial_price(
            100.0,
            95.0,
            0.05,
            0.2,
            1.0,
            2000,
            OptionSide::Put,
            ExerciseStyle::European,
        )
        .unwrap();
        let forward = 100.0 - 95.0 * (-0.05f64).exp();
        assert!((c - p - forward).abs() < 1e-4, "parity gap {}", c - p - forward);
    }

    #[test]
    fn at_the_money_american_put_reference_value() {
        let v = binomial_price(
            100.0,
            100.0,
            0.05,
            0.2,
            1.0,
            2000,
            OptionSide::Put,
            ExerciseStyle::American,
        )
        .unwrap();
        assert!((v - 6.0903).abs() < 5e-4, "reference drifted: {v}");
    }

    #[test]
    fn zero_horizon_collapses_to_intrinsic() {
        let v = binomial_price(
            90.0,
            100.0,
            0.05,
            0.2,
            0.0,
            10,
            OptionSide::Put,
            ExerciseStyle::American,
        )
        .unwrap();
        assert_eq!(v, 10.0);
    }

    #[test]
    fn rejects_degenerate_parameters() {
        let bad = |spot: f64, sigma: f64, steps: usize| {
            binomial_price(
                spot,
                100.0,
                0.05,
                sigma,
                1.0,
                steps,
                OptionSide::Put,
                ExerciseStyle::American,
            )
        };
        assert!(bad(0.0, 0.2, 100).is_err());
        assert!(bad(100.0, 0.0, 100).is_err());
        assert!(bad(100.0, 0.2, 0).is_err());
        // Drift outruns the lattice when dt is too coarse for the rate.
        assert!(binomial_price(
            100.0,
            100.0,
            5.0,
            0.2,
            1.0,
            10,
            OptionSide::Call,
            ExerciseStyle::European,
        )
        .is_err());
    }
}
