use serde::{Deserialize, Serialize};

use crate::bsde::{BasisSpec, EstimateConfig};
use crate::error::{Error, Result};
use crate::model::{CoefficientProfile, ProblemConfig, ProblemSpec, SimplexPoint};
use crate::pde::SimplexGrid;
use crate::pricing::{MarketConfig, MarketSpec};
use crate::sde::TimeGrid;

/// One spatial gap axis of the finite-difference grid: `count` nodes on
/// `[0, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapSpec {
    pub max: f64,
    pub count: usize,
}

/// Finite-difference grid description. The sum axis covers `[s_min, s_max]`
/// with `ns` nodes; one gap axis per adjacent rank pair beyond the first
/// particle. For market problems the coordinates are log prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub s_min: f64,
    pub s_max: f64,
    pub ns: usize,
    #[serde(default)]
    pub gaps: Vec<GapSpec>,
    pub time_steps: usize,
}

impl GridSpec {
    pub fn build(&self, n: usize, horizon: f64) -> Result<SimplexGrid> {
        if self.gaps.len() != n.saturating_sub(1) {
            return Err(Error::validation(format!(
                "grid declares {} gap axes, {} particles need {}",
                self.gaps.len(),
                n,
                n - 1
            )));
        }
        let time = TimeGrid::new(0.0, horizon, self.time_steps)?;
        match n {
            1 => SimplexGrid::line(self.s_min, self.s_max, self.ns, time),
            2 => SimplexGrid::plane(
                self.s_min,
                self.s_max,
                self.ns,
                self.gaps[0].max,
                self.gaps[0].count,
                time,
            ),
            3 => SimplexGrid::wedge(
                self.s_min,
                self.s_max,
                self.ns,
                self.gaps[0].max,
                self.gaps[0].count,
                self.gaps[1].max,
                self.gaps[1].count,
                time,
            ),
            _ => Err(Error::validation(format!(
                "finite-difference grids support 1 to 3 particles, got {n}"
            ))),
        }
    }

    /// Copy with every spatial axis set to `nodes` points, used by mesh
    /// refinement ladders.
    pub fn with_nodes(&self, nodes: usize) -> GridSpec {
        GridSpec {
            ns: nodes,
            gaps: self
                .gaps
                .iter()
                .map(|g| GapSpec {
                    max: g.max,
                    count: nodes,
                })
                .collect(),
            ..self.clone()
        }
    }
}

/// Numerical parameters shared by every operation in a scenario. The seed is
/// mandatory so that no run ever draws entropy implicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    #[serde(default = "default_degree")]
    pub basis_degree: usize,
    /// Adds the obstacle (or terminal) value as a regression feature; worth
    /// switching on for kinked payoffs.
    #[serde(default)]
    pub obstacle_feature: bool,
    #[serde(default)]
    pub allow_nonconcave: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    /// Absolute floor of the Monte-Carlo versus finite-difference tolerance.
    #[serde(default = "default_tol_abs")]
    pub tol_abs: f64,
    /// Standard-error multiplier added on top of the absolute floor.
    #[serde(default = "default_band")]
    pub stderr_band: f64,
    #[serde(default = "default_steps_ladder")]
    pub steps_ladder: Vec<usize>,
    #[serde(default = "default_paths_ladder")]
    pub paths_ladder: Vec<usize>,
    #[serde(default = "default_mesh_ladder")]
    pub mesh_ladder: Vec<usize>,
    #[serde(default = "default_penalty_ladder")]
    pub penalty_ladder: Vec<f64>,
}

fn default_degree() -> usize {
    2
}

fn default_tol_abs() -> f64 {
    0.01
}

fn default_band() -> f64 {
    3.0
}

fn default_steps_ladder() -> Vec<usize> {
    vec![64, 128, 256]
}

fn default_paths_ladder() -> Vec<usize> {
    vec![2_500, 10_000, 40_000]
}

fn default_mesh_ladder() -> Vec<usize> {
    vec![51, 101, 201]
}

fn default_penalty_ladder() -> Vec<f64> {
    vec![10.0, 100.0, 1_000.0]
}

impl Numerics {
    pub fn estimate_config(&self) -> Result<EstimateConfig> {
        if self.paths < 2 {
            return Err(Error::validation(
                "need at least two paths for a standard error",
            ));
        }
        let mut cfg = EstimateConfig::new(self.paths, self.steps, self.seed);
        cfg.allow_nonconcave = self.allow_nonconcave;
        cfg.options.basis = BasisSpec::new(self.basis_degree, self.obstacle_feature)?;
        Ok(cfg)
    }
}

/// A point to compare between representations. For market problems `x` holds
/// prices, otherwise state coordinates; order is free, ranking is internal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probe {
    pub t: f64,
    pub x: Vec<f64>,
}

/// One experiment document: a named scenario over either a backward problem
/// or a market, with all numerical knobs explicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub market: Option<MarketConfig>,
    pub horizon: f64,
    /// Start state for simulation-based commands; market problems default to
    /// the quoted prices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
    pub numerics: Numerics,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<Probe>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
}

impl ExperimentConfig {
    /// Validates the document and materializes the backward problem it
    /// describes. Market documents are reduced to their log-coordinate
    /// problem; every descriptor is registry-checked here, before any
    /// compute or file output.
    pub fn resolve(&self) -> Result<Resolved> {
        if self.scenario.trim().is_empty() {
            return Err(Error::validation("scenario name must be non-empty"));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::validation(format!(
                "horizon must be positive and finite, got {}",
                self.horizon
            )));
        }
        for (i, p) in self.probes.iter().enumerate() {
            if !(p.t.is_finite() && (0.0..=self.horizon).contains(&p.t)) {
                return Err(Error::validation(format!(
                    "probe {i} time {} outside [0, {}]",
                    p.t, self.horizon
                )));
            }
        }
        let (profile, spec, market) = match (&self.problem, &self.market) {
            (Some(p), None) => {
                let (profile, spec) = p.build()?;
                (profile, spec, None)
            }
            (None, Some(m)) => {
                let market = m.build()?;
                let (profile, spec, _) = market.to_log_problem()?;
                (profile, spec, Some(market))
            }
            _ => {
                return Err(Error::validation(
                    "config needs exactly one of `problem` or `market`",
                ));
            }
        };
        let mut resolved = Resolved {
            profile,
            spec,
            market,
            horizon: self.horizon,
            start: None,
        };
        resolved.start = match (&self.start, &resolved.market) {
            (Some(x), _) => Some(resolved.state_point(x)?),
            (None, Some(m)) => Some(resolved.state_point(&m.prices)?),
            (None, None) => None,
        };
        Ok(resolved)
    }

    pub fn grid(&self) -> Result<&GridSpec> {
        self.numerics.grid.as_ref().ok_or_else(|| {
            Error::validation("operation needs a finite-difference grid under numerics.grid")
        })
    }
}

/// Fully validated problem data extracted from a config document. States are
/// log prices when the document described a market.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub profile: CoefficientProfile,
    pub spec: ProblemSpec,
    pub market: Option<MarketSpec>,
    pub horizon: f64,
    start: Option<SimplexPoint>,
}

impl Resolved {
    pub fn n(&self) -> usize {
        self.profile.n
    }

    pub fn start(&self) -> Result<&SimplexPoint> {
        self.start
            .as_ref()
            .ok_or_else(|| Error::validation("config declares no start state"))
    }

    /// Maps config-level coordinates into a ranked problem state. Market
    /// coordinates are prices and pass through the log map first.
    pub fn state_point(&self, x: &[f64]) -> Result<SimplexPoint> {
        if x.len() != self.n() {
            return Err(Error::validation(format!(
                "point has {} coordinates, problem has {}",
                x.len(),
                self.n()
            )));
        }
        let mut coords = if self.market.is_some() {
            if x.iter().any(|&p| !(p > 0.0)) {
                return Err(Error::validation("market coordinates must be positive"));
            }
            x.iter().map(|p| p.ln()).collect::<Vec<f64>>()
        } else {
            x.to_vec()
        };
        coords.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
        SimplexPoint::new(coords)
    }
}

/// Parses an experiment document, reporting the JSON path of the offending
/// key on failure.
pub fn load_experiment_config(json: &str) -> Result<ExperimentConfig> {
    let mut de = serde_json::Deserializer::from_str(json);
    serde_path_to_error::deserialize(&mut de).map_err(|e| Error::Config {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}
