use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CoefficientProfile, GeneratorKind, ObstacleKind, RateCurve, TerminalKind};

/// Bundle of the three data descriptors defining one backward problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub generator: GeneratorKind,
    pub terminal: TerminalKind,
    #[serde(default = "default_obstacle")]
    pub obstacle: ObstacleKind,
}

fn default_obstacle() -> ObstacleKind {
    ObstacleKind::None
}

impl ProblemSpec {
    pub fn new(
        generator: GeneratorKind,
        terminal: TerminalKind,
        obstacle: ObstacleKind,
        n: usize,
    ) -> Result<Self> {
        generator.validate_dims(n)?;
        terminal.validate_dims(n)?;
        obstacle.validate_dims(n)?;
        Ok(ProblemSpec {
            generator,
            terminal,
            obstacle,
        })
    }

    pub fn has_obstacle(&self) -> bool {
        !self.obstacle.is_none()
    }

    pub fn terminal_value(&self, ranked: &[f64]) -> f64 {
        self.terminal.eval(ranked)
    }

    pub fn obstacle_value(
        &self,
        t: f64,
        ranked: &[f64],
        profile: &CoefficientProfile,
        horizon: f64,
    ) -> f64 {
        self.obstacle
            .eval(t, ranked, &self.terminal, profile, horizon)
    }

    pub fn generator_value(
        &self,
        t: f64,
        ranked: &[f64],
        y: f64,
        zbar: &[f64],
        profile: &CoefficientProfile,
    ) -> f64 {
        self.generator.eval(t, ranked, y, zbar, profile)
    }

    /// Declared constant covering both the `(y, z)` Lipschitz bound and the
    /// linear growth of `F(t, x, 0, 0)`.
    pub fn generator_constant(&self, profile: &CoefficientProfile) -> f64 {
        self.generator
            .lipschitz(profile)
            .max(self.generator.growth())
    }
}

/// Single hypothesis check outcome. `worst` is the largest observed ratio of
/// measured quantity to declared bound (or the raw measurement when the
/// declared bound is zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub passed: bool,
    pub worst: f64,
    pub bound: f64,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<HypothesisCheck>,
    pub passed: bool,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            write!(
                f,
                "  [{}] {} (worst {:.4e}, bound {:.4e})",
                if c.passed { "pass" } else { "FAIL" },
                c.name,
                c.worst,
                c.bound
            )?;
            if let Some(note) = &c.note {
                write!(f, " -- {note}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

const RATIO_SLACK: f64 = 1.0 + 1e-9;

struct Sampler {
    rng: ChaCha12Rng,
}

impl Sampler {
    fn new(seed: u64) -> Self {
        Sampler {
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    fn normal(&mut self, scale: f64) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        scale * z
    }

    /// Random point of the ordered domain: iid normals sorted descending.
    fn ranked_point(&mut self, n: usize, scale: f64) -> Vec<f64> {
        let mut x: Vec<f64> = (0..n).map(|_| self.normal(scale)).collect();
        x.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
        x
    }

    fn uniform_time(&mut self, horizon: f64) -> f64 {
        self.rng.random::<f64>() * horizon
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Samples the declared hypothesis bounds on random states, controls and
/// times, with a unit horizon. Deterministic for a fixed seed. Any failed
/// check rejects the spec.
pub fn validate_spec(
    spec: &ProblemSpec,
    profile: &CoefficientProfile,
    samples: usize,
    seed: u64,
) -> Result<ValidationReport> {
    validate_spec_with_horizon(spec, profile, samples, seed, 1.0)
}

pub fn validate_spec_with_horizon(
    spec: &ProblemSpec,
    profile: &CoefficientProfile,
    samples: usize,
    seed: u64,
    horizon: f64,
) -> Result<ValidationReport> {
    spec.generator.validate_dims(profile.n)?;
    spec.terminal.validate_dims(profile.n)?;
    spec.obstacle.validate_dims(profile.n)?;
    let n = profile.n;
    let mut s = Sampler::new(seed);
    let mut checks = Vec::new();

    // Joint Lipschitz bound of the generator in (y, zbar).
    {
        let c = spec.generator_constant(profile);
        let mut worst = 0.0f64;
        for _ in 0..samples {
            let t = s.uniform_time(horizon);
            let x = s.ranked_point(n, 3.0);
            let (y1, y2) = (s.normal(5.0), s.normal(5.0));
            let z1: Vec<f64> = (0..n).map(|_| s.normal(5.0)).collect();
            let z2: Vec<f64> = (0..n).map(|_| s.normal(5.0)).collect();
            let df = (spec.generator_value(t, &x, y1, &z1, profile)
                - spec.generator_value(t, &x, y2, &z2, profile))
            .abs();
            let dist = (y1 - y2).abs()
                + norm2(&z1.iter().zip(&z2).map(|(a, b)| a - b).collect::<Vec<_>>());
            let measure = if c == 0.0 { df } else { df / (c * dist) };
            worst = worst.max(measure);
        }
        let passed = if c == 0.0 {
            worst <= 1e-12
        } else {
            worst <= RATIO_SLACK
        };
        checks.push(HypothesisCheck {
            name: "generator Lipschitz in (y, z)".into(),
            passed,
            worst,
            bound: c,
            note: None,
        });
    }

    // Linear growth of F(t, x, 0, 0).
    {
        let c = spec.generator_constant(profile);
        let zero = vec![0.0; n];
        let mut worst = 0.0f64;
        for _ in 0..samples {
            let t = s.uniform_time(horizon);
            let x = s.ranked_point(n, 3.0);
            let v = spec.generator_value(t, &x, 0.0, &zero, profile).abs();
            let denom = c * (1.0 + norm2(&x));
            worst = worst.max(if c == 0.0 { v } else { v / denom });
        }
        let passed = if c == 0.0 {
            worst <= 1e-12
        } else {
            worst <= RATIO_SLACK
        };
        checks.push(HypothesisCheck {
            name: "generator linear growth at (y,z)=0".into(),
            passed,
            worst,
            bound: c,
            note: None,
        });
    }

    // Terminal Lipschitz bound.
    {
        match spec.terminal.lipschitz(n) {
            Some(c) => {
                let mut worst = 0.0f64;
                for _ in 0..samples {
                    let x1 = s.ranked_point(n, 3.0);
                    let x2 = s.ranked_point(n, 3.0);
                    let dg = (spec.terminal_value(&x1) - spec.terminal_value(&x2)).abs();
                    let dx =
                        norm2(&x1.iter().zip(&x2).map(|(a, b)| a - b).collect::<Vec<_>>());
                    if dx == 0.0 {
                        continue;
                    }
                    let measure = if c == 0.0 { dg } else { dg / (c * dx) };
                    worst = worst.max(measure);
                }
                let passed = if c == 0.0 {
                    worst <= 1e-12
                } else {
                    worst <= RATIO_SLACK
                };
                checks.push(HypothesisCheck {
                    name: "terminal Lipschitz".into(),
                    passed,
                    worst,
                    bound: c,
                    note: None,
                });
            }
            None => checks.push(HypothesisCheck {
                name: "terminal Lipschitz".into(),
                passed: true,
                worst: 0.0,
                bound: f64::INFINITY,
                note: Some(
                    "skipped: payoff is exponential in these coordinates; the bound is \
                     checked in price coordinates"
                        .into(),
                ),
            }),
        }
    }

    // Polynomial upper bound on the obstacle.
    {
        match spec
            .obstacle
            .growth_bound(&spec.terminal, profile, horizon, n)
        {
            Some((c, p)) => {
                let mut worst = 0.0f64;
                for _ in 0..samples {
                    let t = s.uniform_time(horizon);
                    let x = s.ranked_point(n, 3.0);
                    let h = spec.obstacle_value(t, &x, profile, horizon);
                    if h == f64::NEG_INFINITY {
                        continue;
                    }
                    let denom = c * (1.0 + norm2(&x).powi(p));
                    worst = worst.max(if c == 0.0 { h } else { h / denom });
                }
                let passed = if c == 0.0 {
                    worst <= 1e-12
                } else {
                    worst <= RATIO_SLACK
                };
                checks.push(HypothesisCheck {
                    name: "obstacle polynomial growth".into(),
                    passed,
                    worst,
                    bound: c,
                    note: None,
                });
            }
            None => checks.push(HypothesisCheck {
                name: "obstacle polynomial growth".into(),
                passed: true,
                worst: 0.0,
                bound: f64::INFINITY,
                note: Some("skipped: no declared polynomial bound in these coordinates".into()),
            }),
        }
    }

    // Obstacle dominated by the terminal payoff at the horizon.
    {
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..samples {
            let x = s.ranked_point(n, 3.0);
            let h = spec.obstacle_value(horizon, &x, profile, horizon);
            let g = spec.terminal_value(&x);
            let excess = h - g;
            worst = worst.max(excess);
        }
        if worst == f64::NEG_INFINITY {
            worst = 0.0;
        }
        checks.push(HypothesisCheck {
            name: "obstacle below terminal at horizon".into(),
            passed: worst <= 1e-9,
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

/// One self-contained problem document: profile and data descriptors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub n: usize,
    pub delta: Vec<f64>,
    pub sigma: Vec<f64>,
    pub rate: RateCurve,
    pub generator: GeneratorKind,
    pub terminal: TerminalKind,
    #[serde(default = "default_obstacle")]
    pub obstacle: ObstacleKind,
}

impl ProblemConfig {
    pub fn build(&self) -> Result<(CoefficientProfile, ProblemSpec)> {
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
        let spec = ProblemSpec::new(
            self.generator.clone(),
            self.terminal.clone(),
            self.obstacle.clone(),
            self.n,
        )?;
        Ok((profile, spec))
    }
}

/// Parses a problem document, reporting the JSON path of the offending key on
/// failure (for example `generator` for an unknown generator kind).
pub fn load_problem_config(json: &str) -> Result<ProblemConfig> {
    let mut de = serde_json::Deserializer::from_str(json);
    serde_path_to_error::deserialize(&mut de).map_err(|e| Error::Config {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(n: usize, r: f64) -> CoefficientProfile {
        CoefficientProfile::new(
            vec![0.05; n],
            vec![0.2; n],
            RateCurve::Constant { value: r },
        )
        .unwrap()
    }

    #[test]
    fn zero_generator_linear_terminal_passes() {
        let p = profile(2, 0.0);
        let spec = ProblemSpec::new(
            GeneratorKind::Zero,
            TerminalKind::Coordinate { rank: 1 },
            ObstacleKind::None,
            2,
        )
        .unwrap();
        let report = validate_spec(&spec, &p, 200, 7).unwrap();
        assert!(report.passed);
        assert_eq!(report.checks.len(), 5);
    }

    #[test]
    fn obstacle_above_terminal_rejected() {
        let p = profile(1, 0.0);
        // h = 8 constant exceeds g = 7 at the horizon.
        let spec = ProblemSpec::new(
            GeneratorKind::Zero,
            TerminalKind::Constant { value: 7.0 },
            ObstacleKind::Constant { value: 8.0 },
            1,
        )
        .unwrap();
        let err = validate_spec(&spec, &p, 100, 3).unwrap_err();
        match err {
            Error::SpecRejected(report) => {
                let dom = report
                    .checks
                    .iter()
                    .find(|c| c.name.contains("below terminal"))
                    .unwrap();
                assert!(!dom.passed);
                assert!((dom.worst - 1.0).abs() < 1e-12);
            }
            other => panic!("expected SpecRejected, got {other}"),
        }
    }

    #[test]
    fn pricing_constant_confirmed_by_sampling() {
        // Declared constant sup r + |(delta - r)/sigma| for one asset; the
        // sampled ratio must stay at or below one.
        let p = CoefficientProfile::new(
            vec![0.03],
            vec![0.2],
            RateCurve::Constant { value: 0.05 },
        )
        .unwrap();
        let spec = ProblemSpec::new(
            GeneratorKind::Pricing {
                price_drifts: vec![0.11],
            },
            TerminalKind::PutLog {
                strike: 100.0,
                rank: 1,
            },
            ObstacleKind::Payoff,
            1,
        )
        .unwrap();
        let expected_c = 0.05 + (0.11f64 - 0.05).abs() / 0.2;
        assert!((spec.generator_constant(&p) - expected_c).abs() < 1e-12);
        let report = validate_spec(&spec, &p, 500, 11).unwrap();
        assert!(report.passed);
        let lip = &report.checks[0];
        assert!(lip.worst <= 1.0 + 1e-9);
        assert!(lip.worst > 0.5, "sampling should come close to the bound");
    }

    #[test]
    fn report_deterministic_for_fixed_seed() {
        let p = profile(3, 0.02);
        let spec = ProblemSpec::new(
            GeneratorKind::Discount,
            TerminalKind::Sum,
            ObstacleKind::Payoff,
            3,
        )
        .unwrap();
        let a = validate_spec(&spec, &p, 150, 99).unwrap();
        let b = validate_spec(&spec, &p, 150, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_round_trip_and_unknown_kind_path() {
        let json = r#"{
            "n": 2,
            "delta": [0.3, 0.1],
            "sigma": [1.0, 0.8],
            "rate": {"kind": "constant", "value": 0.0},
            "generator": {"kind": "zero"},
            "terminal": {"kind": "sum"},
            "obstacle": {"kind": "none"}
        }"#;
        let cfg = load_problem_config(json).unwrap();
        let (profile, spec) = cfg.build().unwrap();
        assert_eq!(profile.n, 2);
        assert!(!spec.has_obstacle());

        let bad = json.replace("\"kind\": \"zero\"", "\"kind\": \"quadratic\"");
        let err = load_problem_config(&bad).unwrap_err();
        match err {
            Error::Config { path, message } => {
                assert!(path.contains("generator"), "path was {path}");
                assert!(message.contains("quadratic"));
            }
            other => panic!("expected Config error, got {other}"),
        }
    }
}
