use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bsde::{estimate_u, solve_reflected, BsdeSolution, EstimateConfig};
use crate::error::{Error, Result};
use crate::model::{
    CoefficientProfile, GeneratorKind, HypothesisCheck, ObstacleKind, ProblemSpec, RateCurve,
    SimplexPoint, TerminalKind, ValidationReport,
};
use crate::sde::{simulate_with_options, TimeGrid};

/// Claim payoffs in price coordinates, evaluated on the ranked price vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriceClaim {
    Constant {
        value: f64,
    },
    /// `(strike - p_(rank))^+`.
    Put {
        strike: f64,
        #[serde(default = "default_rank")]
        rank: usize,
    },
    /// `(p_(rank) - strike)^+`.
    Call {
        strike: f64,
        #[serde(default = "default_rank")]
        rank: usize,
    },
    /// The ranked price itself.
    RankedPrice {
        #[serde(default = "default_rank")]
        rank: usize,
    },
    /// `sum_j weights_j * p_(j)`.
    Basket { weights: Vec<f64> },
    /// `(sum_j weights_j * p_(j) - strike)^+`.
    BasketCall { weights: Vec<f64>, strike: f64 },
}

fn default_rank() -> usize {
    1
}

fn check_basket(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::validation(format!(
            "basket has {} weights for n={n}",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::validation(
            "basket weights must be finite and non-negative",
        ));
    }
    Ok(())
}

impl PriceClaim {
    pub fn validate_dims(&self, n: usize) -> Result<()> {
        let check_rank = |rank: usize| {
            if rank == 0 || rank > n {
                Err(Error::validation(format!(
                    "rank {rank} out of range for n={n}"
                )))
            } else {
                Ok(())
            }
        };
        match self {
            PriceClaim::Constant { value } => {
                if !value.is_finite() || *value < 0.0 {
                    return Err(Error::validation(
                        "constant claim must be finite and non-negative",
                    ));
                }
                Ok(())
            }
            PriceClaim::Put { strike, rank } | PriceClaim::Call { strike, rank } => {
                check_rank(*rank)?;
                if !strike.is_finite() || *strike < 0.0 {
                    return Err(Error::validation("strike must be finite and non-negative"));
                }
                Ok(())
            }
            PriceClaim::RankedPrice { rank } => check_rank(*rank),
            PriceClaim::Basket { weights } => check_basket(weights, n),
            PriceClaim::BasketCall { weights, strike } => {
                check_basket(weights, n)?;
                if !strike.is_finite() || *strike < 0.0 {
                    return Err(Error::validation("strike must be finite and non-negative"));
                }
                Ok(())
            }
        }
    }

    /// Payoff on a ranked (non-increasing) price vector.
    pub fn eval(&self, ranked_prices: &[f64]) -> f64 {
        match self {
            PriceClaim::Constant { value } => *value,
            PriceClaim::Put { strike, rank } => (strike - ranked_prices[rank - 1]).max(0.0),
            PriceClaim::Call { strike, rank } => (ranked_prices[rank - 1] - strike).max(0.0),
            PriceClaim::RankedPrice { rank } => ranked_prices[rank - 1],
            PriceClaim::Basket { weights } => weights
                .iter()
                .zip(ranked_prices)
                .map(|(w, p)| w * p)
                .sum(),
            PriceClaim::BasketCall { weights, strike } => (weights
                .iter()
                .zip(ranked_prices)
                .map(|(w, p)| w * p)
                .sum::<f64>()
                - strike)
                .max(0.0),
        }
    }

    /// Lipschitz constant in the price vector under the Euclidean norm.
    pub fn lipschitz(&self) -> f64 {
        match self {
            PriceClaim::Constant { .. } => 0.0,
            PriceClaim::Put { .. } | PriceClaim::Call { .. } | PriceClaim::RankedPrice { .. } => {
                1.0
            }
            PriceClaim::Basket { weights } | PriceClaim::BasketCall { weights, .. } => {
                weights.iter().map(|w| w * w).sum::<f64>().sqrt()
            }
        }
    }

    /// The same payoff as terminal data on the log-price state.
    fn to_log_terminal(&self) -> TerminalKind {
        match self {
            PriceClaim::Constant { value } => TerminalKind::Constant { value: *value },
            PriceClaim::Put { strike, rank } => TerminalKind::PutLog {
                strike: *strike,
                rank: *rank,
            },
            PriceClaim::Call { strike, rank } => TerminalKind::CallLog {
                strike: *strike,
                rank: *rank,
            },
            PriceClaim::RankedPrice { rank } => TerminalKind::ExpCoordinate { rank: *rank },
            PriceClaim::Basket { weights } => TerminalKind::ExpBasket {
                weights: weights.clone(),
            },
            PriceClaim::BasketCall { weights, strike } => TerminalKind::ExpBasketCall {
                weights: weights.clone(),
                strike: *strike,
            },
        }
    }
}

/// Early-exercise right attached to a claim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EarlyExercise {
    /// European: no exercise before the horizon.
    None,
    /// American: exercise value is the claim payoff, flat in time.
    Intrinsic,
    /// Constant floor on the wealth process.
    Floor { value: f64 },
}

impl EarlyExercise {
    fn to_log_obstacle(&self) -> ObstacleKind {
        match self {
            EarlyExercise::None => ObstacleKind::None,
            EarlyExercise::Intrinsic => ObstacleKind::Payoff,
            EarlyExercise::Floor { value } => ObstacleKind::Constant { value: *value },
        }
    }
}

/// A rank-based stock market: per-rank drift and volatility for the stocks,
/// a bond compounding at the short rate, current ranked prices, and the claim
/// to price.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketSpec {
    pub profile: CoefficientProfile,
    pub bond: f64,
    pub prices: Vec<f64>,
    pub claim: PriceClaim,
    pub exercise: EarlyExercise,
}

impl MarketSpec {
    pub fn new(
        profile: CoefficientProfile,
        bond: f64,
        prices: Vec<f64>,
        claim: PriceClaim,
        exercise: EarlyExercise,
    ) -> Result<Self> {
        if !bond.is_finite() || bond <= 0.0 {
            return Err(Error::validation("bond value must be positive"));
        }
        if prices.len() != profile.n {
            return Err(Error::validation(format!(
                "market has {} prices for n={}",
                prices.len(),
                profile.n
            )));
        }
        if prices.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(Error::validation("prices must be positive"));
        }
        if prices.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::validation(
                "prices must be ranked in non-increasing order",
            ));
        }
        claim.validate_dims(profile.n)?;
        if let EarlyExercise::Floor { value } = exercise {
            if !value.is_finite() {
                return Err(Error::validation("exercise floor must be finite"));
            }
        }
        Ok(MarketSpec {
            profile,
            bond,
            prices,
            claim,
            exercise,
        })
    }

    /// Bond value at `t1` given its value `bond` at `t0`, compounding at the
    /// short rate.
    pub fn bond_value(&self, t0: f64, t1: f64) -> f64 {
        self.bond * self.profile.rate.integral(t0, t1).exp()
    }

    /// Exercise-now value of the claim at the current prices.
    pub fn intrinsic(&self) -> f64 {
        self.claim.eval(&self.prices)
    }

    /// The equivalent log-coordinate problem: drifts lose half the squared
    /// volatility, the generator carries the rate and per-rank risk premia,
    /// and the claim becomes its exponential-composed form. The returned
    /// state is the ranked log-price vector.
    pub fn to_log_problem(&self) -> Result<(CoefficientProfile, ProblemSpec, SimplexPoint)> {
        let n = self.profile.n;
        let log_delta: Vec<f64> = (0..n)
            .map(|j| self.profile.delta[j] - 0.5 * self.profile.sigma[j] * self.profile.sigma[j])
            .collect();
        let log_profile = CoefficientProfile::new(
            log_delta,
            self.profile.sigma.clone(),
            self.profile.rate.clone(),
        )?;
        let spec = ProblemSpec::new(
            GeneratorKind::Pricing {
                price_drifts: self.profile.delta.clone(),
            },
            self.claim.to_log_terminal(),
            self.exercise.to_log_obstacle(),
            n,
        )?;
        let x0 = SimplexPoint::new(self.prices.iter().map(|p| p.ln()).collect())?;
        Ok((log_profile, spec, x0))
    }
}

/// Samples the claim hypotheses in price coordinates: the declared Lipschitz
/// bound, linear growth of the exercise value, and exercise value below the
/// terminal payoff at the horizon. Deterministic for a fixed seed.
pub fn validate_market(market: &MarketSpec, samples: usize, seed: u64) -> Result<ValidationReport> {
    let n = market.profile.n;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut draw = |scale: f64| -> Vec<f64> {
        let mut p: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (scale * z).exp()
            })
            .collect();
        p.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
        p
    };
    let mut checks = Vec::new();

    {
        let c = market.claim.lipschitz();
        let mut worst = 0.0f64;
        for _ in 0..samples {
            let p = draw(1.0);
            let q = draw(1.0);
            let dist = p
                .iter()
                .zip(&q)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if dist > 0.0 {
                worst = worst.max((market.claim.eval(&p) - market.claim.eval(&q)).abs() / dist);
            }
        }
        checks.push(HypothesisCheck {
            name: "claim Lipschitz bound in price coordinates".into(),
            passed: worst <= c * (1.0 + 1e-9),
            worst,
            bound: c,
            note: None,
        });
    }

    {
        // Exercise value against linear growth in the prices.
        let floor = match market.exercise {
            EarlyExercise::Floor { value } => value.max(0.0),
            _ => 0.0,
        };
        let c = market.claim.lipschitz() + market.claim.eval(&vec![1e-12; n]) + floor;
        let mut worst = 0.0f64;
        for _ in 0..samples {
            let p = draw(1.5);
            let h = match &market.exercise {
                EarlyExercise::None => 0.0,
                EarlyExercise::Intrinsic => market.claim.eval(&p),
                EarlyExercise::Floor { value } => *value,
            };
            let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            worst = worst.max(h / (1.0 + norm));
        }
        checks.push(HypothesisCheck {
            name: "exercise value linear growth".into(),
            passed: worst <= c * (1.0 + 1e-9),
            worst,
            bound: c,
            note: None,
        });
    }

    {
        let mut worst = 0.0f64;
        for _ in 0..samples {
            let p = draw(1.0);
            let h = match &market.exercise {
                EarlyExercise::None => f64::NEG_INFINITY,
                EarlyExercise::Intrinsic => market.claim.eval(&p),
                EarlyExercise::Floor { value } => *value,
            };
            worst = worst.max(h - market.claim.eval(&p));
        }
        checks.push(HypothesisCheck {
            name: "exercise value below terminal payoff".into(),
            passed: worst <= 1e-12,
            worst,
            bound: 0.0,
            note: None,
        });
    }

    let passed = checks.iter().all(|c| c.passed);
    let report = ValidationReport { checks, passed };
    if passed {
        Ok(report)
    } else {
        Err(Error::SpecRejected(report))
    }
}

/// Price and hedging diagnostics for one claim.
#[derive(Debug, Clone, Serialize)]
pub struct PricingResult {
    pub price: f64,
    pub stderr: f64,
    /// Ranked dollar-volatility positions at time zero; entry `j` is the
    /// product of the rank-`j` volatility and the value held in that stock.
    pub hedge: Vec<f64>,
    /// Mean accumulated consumption of the superhedge over the horizon.
    pub consumption: f64,
    pub solution: BsdeSolution,
}

/// Monte Carlo price of the claim over `[0, horizon]`: maps the market to
/// log coordinates and runs the reflected backward solver. The solution's
/// value process is the price process of the claim.
pub fn price_american(
    market: &MarketSpec,
    horizon: f64,
    cfg: &EstimateConfig,
) -> Result<PricingResult> {
    let (log_profile, spec, x0) = market.to_log_problem()?;
    let sol = estimate_u(&log_profile, &spec, &x0, 0.0, horizon, cfg)?;
    Ok(PricingResult {
        price: sol.u0,
        stderr: sol.stderr,
        hedge: sol.z0.clone(),
        consumption: sol.k_mean,
        solution: sol,
    })
}

/// Monte-Carlo samples of the early exercise boundary for single-asset
/// claims: per time step, the largest simulated price at which the solver's
/// obstacle projection was active. Meaningful for claims exercised below a
/// price threshold (puts); empty for `n > 1` or claims without early
/// exercise, and for steps where no path exercised.
pub fn exercise_boundary_samples(
    market: &MarketSpec,
    horizon: f64,
    cfg: &EstimateConfig,
) -> Result<Vec<(f64, f64)>> {
    if market.profile.n != 1 {
        return Ok(Vec::new());
    }
    let (log_profile, spec, x0) = market.to_log_problem()?;
    if !spec.has_obstacle() {
        return Ok(Vec::new());
    }
    let grid = TimeGrid::new(0.0, horizon, cfg.steps)?;
    let bundle = simulate_with_options(
        &log_profile,
        &x0,
        &grid,
        cfg.paths,
        cfg.seed,
        cfg.allow_nonconcave,
    )?;
    let mut options = cfg.options;
    options.keep_paths = true;
    let sol = solve_reflected(&bundle, &log_profile, &spec, &options)?;
    let mut out = Vec::new();
    let mut ranked = [0.0f64; 1];
    for k in 0..sol.steps {
        let t = grid.time(k);
        let mut best: Option<f64> = None;
        for i in 0..bundle.paths {
            if sol.dk_at(i, k).unwrap_or(0.0) <= 0.0 {
                continue;
            }
            bundle.ranked_state_into(i, k, &mut ranked);
            // A projection onto a worthless obstacle is fit noise, not an
            // exercise; only positive intrinsic value marks the region.
            if spec.obstacle_value(t, &ranked, &log_profile, horizon) <= 0.0 {
                continue;
            }
            let price = ranked[0].exp();
            best = Some(best.map_or(price, |b: f64| b.max(price)));
        }
        if let Some(price) = best {
            out.push((t, price));
        }
    }
    Ok(out)
}

/// One self-contained market document, mirroring the problem document shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    pub n: usize,
    pub delta: Vec<f64>,
    pub sigma: Vec<f64>,
    pub rate: RateCurve,
    #[serde(default = "default_bond")]
    pub bond: f64,
    pub prices: Vec<f64>,
    pub claim: PriceClaim,
    #[serde(default = "default_exercise")]
    pub exercise: EarlyExercise,
}

fn default_bond() -> f64 {
    1.0
}

fn default_exercise() -> EarlyExercise {
    EarlyExercise::Intrinsic
}

impl MarketConfig {
    pub fn build(&self) -> Result<MarketSpec> {
        if self.delta.len() != self.n || self.sigma.len() != self.n {
            return Err(Error::validation(format!(
                "declared n={} but delta has {} and sigma has {} entries",
                self.n,
                self.delta.len(),
                self.sigma.len()
            )));
        }
        let profile =
            CoefficientProfile::new(self.delta.clone(), self.sigma.clone(), self.rate.clone())?;
        MarketSpec::new(
            profile,
            self.bond,
            self.prices.clone(),
            self.claim.clone(),
            self.exercise.clone(),
        )
    }
}

/// Parses a market document, reporting the JSON path of the offending key on
/// failure.
pub fn load_market_config(json: &str) -> Result<MarketConfig> {
    let mut de = serde_json::Deserializer::from_str(json);
    serde_path_to_error::deserialize(&mut de).map_err(|e| Error::Config {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsde::BasisSpec;
    use crate::pricing::binomial::{binomial_price, ExerciseStyle, OptionSide};
    use crate::sde::{simulate, TimeGrid};

    fn flat_market(
        n: usize,
        delta: f64,
        sigma: f64,
        rate: f64,
        price: f64,
        claim: PriceClaim,
        exercise: EarlyExercise,
    ) -> MarketSpec {
        let profile = CoefficientProfile::new(
            vec![delta; n],
            vec![sigma; n],
            RateCurve::Constant { value: rate },
        )
        .unwrap();
        MarketSpec::new(profile, 1.0, vec![price; n], claim, exercise).unwrap()
    }

    #[test]
    fn log_drift_cancels_at_half_squared_volatility() {
        let sigma = 0.3f64;
        let m = flat_market(
            2,
            0.5 * sigma * sigma,
            sigma,
            0.05,
            1.0,
            PriceClaim::Basket {
                weights: vec![1.0, 1.0],
            },
            EarlyExercise::None,
        );
        let (log_profile, _, x0) = m.to_log_problem().unwrap();
        for d in &log_profile.delta {
            assert_eq!(*d, 0.0);
        }
        assert_eq!(x0.coords(), &[0.0, 0.0]);
    }

    #[test]
    fn generator_drops_risk_premium_when_drift_equals_rate() {
        let m = flat_market(
            1,
            0.05,
            0.2,
            0.05,
            1.2,
            PriceClaim::RankedPrice { rank: 1 },
            EarlyExercise::None,
        );
        let (log_profile, spec, _) = m.to_log_problem().unwrap();
        for &(y, z) in &[(0.7, 0.1), (-2.0, 0.5), (0.0, -1.3)] {
            let f = spec.generator_value(0.3, &[0.0], y, &[z], &log_profile);
            assert!((f - (-0.05 * y)).abs() < 1e-15, "premium leaked: {f}");
        }
    }

    #[test]
    fn bond_compounds_at_the_short_rate() {
        let m = flat_market(
            1,
            0.05,
            0.2,
            0.05,
            1.0,
            PriceClaim::RankedPrice { rank: 1 },
            EarlyExercise::None,
        );
        assert!((m.bond_value(0.0, 1.0) - 0.05f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn rejects_malformed_markets() {
        let profile = CoefficientProfile::new(
            vec![0.05, 0.05],
            vec![0.2, 0.2],
            RateCurve::Constant { value: 0.05 },
        )
        .unwrap();
        let claim = PriceClaim::Basket {
            weights: vec![1.0, 1.0],
        };
        let m = |bond: f64, prices: Vec<f64>| {
            MarketSpec::new(
                profile.clone(),
                bond,
                prices,
                claim.clone(),
                EarlyExercise::Intrinsic,
            )
        };
        assert!(m(0.0, vec![1.0, 0.5]).is_err());
        assert!(m(1.0, vec![1.0, -0.5]).is_err());
        assert!(m(1.0, vec![0.5, 1.0]).is_err(), "order not enforced");
        assert!(m(1.0, vec![1.0]).is_err(), "length not enforced");
        let bad_claim = MarketSpec::new(
            profile,
            1.0,
            vec![1.0, 0.5],
            PriceClaim::Put {
                strike: 1.0,
                rank: 3,
            },
            EarlyExercise::Intrinsic,
        );
        assert!(bad_claim.is_err(), "rank not checked");
    }

    #[test]
    fn market_hypothesis_sampling_accepts_put_and_flags_high_floor() {
        let ok = flat_market(
            2,
            0.05,
            0.2,
            0.05,
            1.0,
            PriceClaim::Put {
                strike: 1.0,
                rank: 1,
            },
            EarlyExercise::Intrinsic,
        );
        let report = validate_market(&ok, 400, 7).unwrap();
        assert!(report.passed);
        assert_eq!(report.checks.len(), 3);

        // A floor above the payoff range breaks the horizon-compatibility
        // condition.
        let bad = flat_market(
            2,
            0.05,
            0.2,
            0.05,
            1.0,
            PriceClaim::Put {
                strike: 1.0,
                rank: 1,
            },
            EarlyExercise::Floor { value: 5.0 },
        );
        let err = validate_market(&bad, 400, 7).unwrap_err();
        assert!(matches!(err, Error::SpecRejected(_)));
    }

    #[test]
    fn zero_claim_prices_to_zero_with_no_consumption() {
        let m = flat_market(
            1,
            0.05,
            0.2,
            0.05,
            1.0,
            PriceClaim::Constant { value: 0.0 },
            EarlyExercise::Intrinsic,
        );
        let r = price_american(&m, 1.0, &EstimateConfig::new(500, 8, 11)).unwrap();
        assert!(r.price.abs() < 1e-10, "null claim priced at {}", r.price);
        assert!(r.consumption.abs() < 1e-10);
    }

    #[test]
    fn stock_itself_prices_to_spot_under_martingale_drift() {
        let m = flat_market(
            1,
            0.05,
            0.2,
            0.05,
            1.3,
            PriceClaim::RankedPrice { rank: 1 },
            EarlyExercise::None,
        );
        let r = price_american(&m, 1.0, &EstimateConfig::new(8000, 25, 17)).unwrap();
        let tol = (3.0 * r.stderr).max(0.01 * 1.3);
        assert!(
            (r.price - 1.3).abs() < tol,
            "stock priced at {} +- {}",
            r.price,
            r.stderr
        );
    }

    #[test]
    fn american_put_tracks_binomial_oracle() {
        let m = flat_market(
            1,
            0.05,
            0.2,
            0.05,
            100.0,
            PriceClaim::Put {
                strike: 100.0,
                rank: 1,
            },
            EarlyExercise::Intrinsic,
        );
        // The obstacle column lets the quadratic basis track the payoff kink,
        // which sets the exercise policy quality.
        let mut cfg = EstimateConfig::new(20_000, 50, 29);
        cfg.options.basis = BasisSpec::new(3, true).unwrap();
        let r = price_american(&m, 1.0, &cfg).unwrap();
        let oracle = binomial_price(
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
        let rel = (r.price - oracle).abs() / oracle;
        assert!(rel < 0.01, "price {} vs oracle {oracle}", r.price);
        assert_eq!(r.hedge.len(), 1);
        assert!(r.hedge[0] < 0.0, "put hedge should be short the stock");
        assert!(r.consumption >= 0.0);
    }

    #[test]
    fn put_boundary_samples_sit_below_strike_and_rise_toward_it() {
        let claim = PriceClaim::Put {
            strike: 100.0,
            rank: 1,
        };
        let m = flat_market(1, 0.05, 0.2, 0.05, 100.0, claim.clone(), EarlyExercise::Intrinsic);
        let mut cfg = EstimateConfig::new(4_000, 32, 7);
        cfg.options.basis = BasisSpec::new(3, true).unwrap();
        let samples = exercise_boundary_samples(&m, 1.0, &cfg).unwrap();
        assert!(samples.len() > 10, "only {} boundary samples", samples.len());
        for (t, p) in &samples {
            assert!((0.0..1.0).contains(t));
            assert!(*p > 0.0 && *p < 100.0, "boundary sample {p} not below strike");
        }
        let early: f64 = samples[..3].iter().map(|s| s.1).sum::<f64>() / 3.0;
        let late_window = &samples[samples.len() - 3..];
        let late: f64 = late_window.iter().map(|s| s.1).sum::<f64>() / 3.0;
        assert!(
            late > early,
            "boundary should rise toward the strike: {early} then {late}"
        );
        let euro = flat_market(1, 0.05, 0.2, 0.05, 100.0, claim, EarlyExercise::None);
        assert!(exercise_boundary_samples(&euro, 1.0, &cfg)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn american_dominates_european_and_immediate_exercise() {
        let claim = PriceClaim::Put {
            strike: 100.0,
            rank: 1,
        };
        let am_market = flat_market(1, 0.05, 0.2, 0.05, 90.0, claim.clone(), EarlyExercise::Intrinsic);
        let eu_market = flat_market(1, 0.05, 0.2, 0.05, 90.0, claim, EarlyExercise::None);
        let cfg = EstimateConfig::new(8000, 32, 41);
        let am = price_american(&am_market, 1.0, &cfg).unwrap();
        let eu = price_american(&eu_market, 1.0, &cfg).unwrap();
        let slack = 3.0 * (am.stderr + eu.stderr);
        assert!(am.price >= eu.price - slack, "{} < {}", am.price, eu.price);
        assert!(
            am.price >= am_market.intrinsic() - slack,
            "below immediate exercise"
        );
    }

    #[test]
    fn put_value_is_nondecreasing_in_horizon() {
        let m = flat_market(
            1,
            0.05,
            0.2,
            0.05,
            100.0,
            PriceClaim::Put {
                strike: 100.0,
                rank: 1,
            },
            EarlyExercise::Intrinsic,
        );
        let cfg = EstimateConfig::new(8000, 32, 43);
        let short = price_american(&m, 0.5, &cfg).unwrap();
        let long = price_american(&m, 1.0, &cfg).unwrap();
        let slack = 3.0 * (short.stderr + long.stderr);
        assert!(
            long.price >= short.price - slack,
            "{} < {}",
            long.price,
            short.price
        );
    }

    #[test]
    fn simulated_prices_stay_positive_and_ordered() {
        let m = flat_market(
            2,
            0.05,
            0.2,
            0.05,
            1.0,
            PriceClaim::Basket {
                weights: vec![1.0, 1.0],
            },
            EarlyExercise::None,
        );
        let (log_profile, _, x0) = m.to_log_problem().unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 16).unwrap();
        let bundle = simulate(&log_profile, &x0, &grid, 64, 57).unwrap();
        let mut state = vec![0.0; 2];
        for path in 0..64 {
            for k in 0..=16 {
                bundle.ranked_state_into(path, k, &mut state);
                let (p1, p2) = (state[0].exp(), state[1].exp());
                assert!(p1.is_finite() && p2.is_finite() && p2 > 0.0);
                assert!(p1 >= p2, "order broken: {p1} < {p2}");
            }
        }
    }

    #[test]
    fn tied_pair_prices_near_frozen_volatility_proxy() {
        // A call on the summed value of two identical stocks against a
        // single name at the sum, with the instantaneous volatility of the
        // sum frozen at its time-zero value sigma / sqrt(2). Freezing is
        // only exact at equal prices, so the short horizon keeps the drift
        // of the effective volatility inside the error allowance.
        let m2 = flat_market(
            2,
            0.05,
            0.2,
            0.05,
            1.0,
            PriceClaim::BasketCall {
                weights: vec![1.0, 1.0],
                strike: 2.0,
            },
            EarlyExercise::Intrinsic,
        );
        let horizon = 0.25;
        let r2 = price_american(&m2, horizon, &EstimateConfig::new(8000, 16, 61)).unwrap();

        let frozen_sigma = 0.2 / (2.0f64).sqrt();
        let m1 = flat_market(
            1,
            0.05,
            frozen_sigma,
            0.05,
            2.0,
            PriceClaim::Call {
                strike: 2.0,
                rank: 1,
            },
            EarlyExercise::Intrinsic,
        );
        let r1 = price_american(&m1, horizon, &EstimateConfig::new(8000, 16, 61)).unwrap();
        let tol = (3.0 * (r1.stderr + r2.stderr)).max(0.02 * r1.price);
        assert!(
            (r2.price - r1.price).abs() < tol,
            "pair {} vs proxy {}",
            r2.price,
            r1.price
        );
    }

    #[test]
    fn market_config_round_trips_and_reports_bad_keys() {
        let json = r#"{
            "n": 1,
            "delta": [0.05],
            "sigma": [0.2],
            "rate": {"kind": "constant", "value": 0.05},
            "prices": [100.0],
            "claim": {"kind": "put", "strike": 100.0}
        }"#;
        let cfg = load_market_config(json).unwrap();
        assert_eq!(cfg.bond, 1.0);
        assert_eq!(cfg.exercise, EarlyExercise::Intrinsic);
        let market = cfg.build().unwrap();
        assert_eq!(market.intrinsic(), 0.0);

        let bad = r#"{
            "n": 1,
            "delta": [0.05],
            "sigma": [0.2],
            "rate": {"kind": "constant", "value": 0.05},
            "prices": [100.0],
            "claim": {"kind": "strangle", "strike": 100.0}
        }"#;
        let err = load_market_config(bad).unwrap_err();
        match err {
            Error::Config { path, .. } => assert!(path.contains("claim"), "path {path}"),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
