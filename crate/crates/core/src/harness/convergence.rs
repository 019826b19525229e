use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bsde::{estimate_u, solve_penalized, solve_reflected};
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::pde::{solve_obstacle, PdeMode, PdeOptions};
use crate::sde::{simulate_with_options, TimeGrid};

/// Refinement direction of a convergence study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceAxis {
    /// Time-step refinement of the backward simulation estimate.
    Dt,
    /// Path-count growth; the standard error should shrink at the CLT rate.
    Paths,
    /// Spatial refinement of the finite-difference value at the start state.
    Mesh,
    /// Penalty-intensity growth toward the projected solution.
    Penalty,
}

impl ConvergenceAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConvergenceAxis::Dt => "dt",
            ConvergenceAxis::Paths => "paths",
            ConvergenceAxis::Mesh => "mesh",
            ConvergenceAxis::Penalty => "penalty",
        }
    }
}

impl FromStr for ConvergenceAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dt" => Ok(ConvergenceAxis::Dt),
            "paths" => Ok(ConvergenceAxis::Paths),
            "mesh" => Ok(ConvergenceAxis::Mesh),
            "penalty" => Ok(ConvergenceAxis::Penalty),
            other => Err(Error::validation(format!(
                "unknown convergence axis `{other}`; expected dt, paths, mesh or penalty"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    /// Ladder value: dt, path count, nodes per axis, or penalty intensity.
    pub level: f64,
    pub stat: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
    /// Difference to the previous row's statistic.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diff: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub axis: ConvergenceAxis,
    /// Name of the per-level statistic.
    pub statistic: String,
    pub rows: Vec<ConvergenceRow>,
    pub passed: bool,
    /// The rule the verdict applied.
    pub note: String,
}

impl ConvergenceTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "axis,level,{},stderr,diff", self.statistic)?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                self.axis.as_str(),
                r.level,
                r.stat,
                r.stderr.map(|v| v.to_string()).unwrap_or_default(),
                r.diff.map(|v| v.to_string()).unwrap_or_default()
            )?;
        }
        Ok(())
    }
}

fn with_diffs(mut rows: Vec<ConvergenceRow>) -> Vec<ConvergenceRow> {
    for i in 1..rows.len() {
        rows[i].diff = Some(rows[i].stat - rows[i - 1].stat);
    }
    rows
}

fn check_ladder_len(len: usize, axis: ConvergenceAxis) -> Result<()> {
    if len < 3 {
        return Err(Error::validation(format!(
            "{} ladder needs at least 3 levels, got {len}",
            axis.as_str()
        )));
    }
    Ok(())
}

/// Runs the refinement ladder configured for `axis` and renders one row per
/// level with successive differences and a trend verdict.
///
/// The statistic and rule per axis:
/// * `dt` — simulation estimate at the start state over `steps_ladder`;
///   successive differences must not grow beyond the combined noise band.
/// * `paths` — standard error over `paths_ladder`; each drop must match the
///   square-root rate within 30 percent.
/// * `mesh` — grid value at the start state over `mesh_ladder` (every axis
///   set to the level's node count); differences must shrink.
/// * `penalty` — penalized estimate over `penalty_ladder` on one shared
///   bundle; the statistic must be non-decreasing within one standard error.
pub fn convergence_table(
    config: &ExperimentConfig,
    axis: ConvergenceAxis,
) -> Result<ConvergenceTable> {
    let resolved = config.resolve()?;
    let numerics = &config.numerics;
    let base = numerics.estimate_config()?;
    match axis {
        ConvergenceAxis::Dt => {
            check_ladder_len(numerics.steps_ladder.len(), axis)?;
            let start = resolved.start()?;
            let mut rows = Vec::new();
            for &steps in &numerics.steps_ladder {
                let mut cfg = base;
                cfg.steps = steps;
                let sol = estimate_u(
                    &resolved.profile,
                    &resolved.spec,
                    start,
                    0.0,
                    resolved.horizon,
                    &cfg,
                )?;
                rows.push(ConvergenceRow {
                    level: resolved.horizon / steps as f64,
                    stat: sol.u0,
                    stderr: Some(sol.stderr),
                    diff: None,
                });
            }
            let rows = with_diffs(rows);
            let mut passed = true;
            for i in 2..rows.len() {
                let band = 3.0
                    * (rows[i].stderr.unwrap_or(0.0) + rows[i - 1].stderr.unwrap_or(0.0));
                if rows[i].diff.unwrap().abs() > rows[i - 1].diff.unwrap().abs() + band {
                    passed = false;
                }
            }
            Ok(ConvergenceTable {
                axis,
                statistic: "u0".into(),
                rows,
                passed,
                note: "successive |diff| non-increasing up to a 3 stderr band".into(),
            })
        }
        ConvergenceAxis::Paths => {
            check_ladder_len(numerics.paths_ladder.len(), axis)?;
            let start = resolved.start()?;
            let mut rows = Vec::new();
            for &paths in &numerics.paths_ladder {
                let mut cfg = base;
                cfg.paths = paths;
                let sol = estimate_u(
                    &resolved.profile,
                    &resolved.spec,
                    start,
                    0.0,
                    resolved.horizon,
                    &cfg,
                )?;
                rows.push(ConvergenceRow {
                    level: paths as f64,
                    stat: sol.stderr,
                    stderr: None,
                    diff: None,
                });
            }
            let rows = with_diffs(rows);
            let mut passed = true;
            for i in 1..rows.len() {
                let expected = (rows[i - 1].level / rows[i].level).sqrt();
                let observed = rows[i].stat / rows[i - 1].stat;
                if !(observed / expected - 1.0).abs().is_finite()
                    || (observed / expected - 1.0).abs() > 0.3
                {
                    passed = false;
                }
            }
            Ok(ConvergenceTable {
                axis,
                statistic: "stderr".into(),
                rows,
                passed,
                note: "stderr tracks the square-root path rate within 30%".into(),
            })
        }
        ConvergenceAxis::Mesh => {
            check_ladder_len(numerics.mesh_ladder.len(), axis)?;
            let grid_spec = config.grid()?;
            let start = resolved.start()?;
            let mut rows = Vec::new();
            for &nodes in &numerics.mesh_ladder {
                let grid = grid_spec
                    .with_nodes(nodes)
                    .build(resolved.n(), resolved.horizon)?;
                let sol = solve_obstacle(
                    &resolved.profile,
                    &resolved.spec,
                    &grid,
                    PdeMode::Projected,
                    &PdeOptions::default(),
                )?;
                rows.push(ConvergenceRow {
                    level: nodes as f64,
                    stat: sol.probe(0.0, start.coords())?,
                    stderr: None,
                    diff: None,
                });
            }
            let rows = with_diffs(rows);
            let mut passed = true;
            for i in 2..rows.len() {
                if rows[i].diff.unwrap().abs() > rows[i - 1].diff.unwrap().abs() + 1e-12 {
                    passed = false;
                }
            }
            Ok(ConvergenceTable {
                axis,
                statistic: "value".into(),
                rows,
                passed,
                note: "successive |diff| non-increasing under mesh refinement".into(),
            })
        }
        ConvergenceAxis::Penalty => {
            check_ladder_len(numerics.penalty_ladder.len(), axis)?;
            if !resolved.spec.has_obstacle() {
                return Err(Error::validation(
                    "penalty ladder needs a problem with an obstacle",
                ));
            }
            let start = resolved.start()?;
            let grid = TimeGrid::new(0.0, resolved.horizon, base.steps)?;
            let bundle = simulate_with_options(
                &resolved.profile,
                start,
                &grid,
                base.paths,
                base.seed,
                base.allow_nonconcave,
            )?;
            let mut rows = Vec::new();
            for &rho in &numerics.penalty_ladder {
                let sol =
                    solve_penalized(&bundle, &resolved.profile, &resolved.spec, rho, &base.options)?;
                rows.push(ConvergenceRow {
                    level: rho,
                    stat: sol.u0,
                    stderr: Some(sol.stderr),
                    diff: None,
                });
            }
            // Reference row: the projected solve on the same bundle.
            let reflected =
                solve_reflected(&bundle, &resolved.profile, &resolved.spec, &base.options)?;
            let mut passed = true;
            for i in 1..rows.len() {
                if rows[i].stat < rows[i - 1].stat - rows[i - 1].stderr.unwrap_or(0.0) {
                    passed = false;
                }
            }
            let mut rows = with_diffs(rows);
            rows.push(ConvergenceRow {
                level: f64::INFINITY,
                stat: reflected.u0,
                stderr: Some(reflected.stderr),
                diff: None,
            });
            Ok(ConvergenceTable {
                axis,
                statistic: "u0".into(),
                rows,
                passed,
                note: "penalized values non-decreasing within one stderr; final row is the \
                       projected reference"
                    .into(),
            })
        }
    }
}
