use std::io::Write;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::bsde::basis::BasisSpec;
use crate::bsde::regression::RegressionPlan;
use crate::error::{Error, Result};
use crate::model::{rank_state, ranked_to_named_z, CoefficientProfile, ProblemSpec, SimplexPoint};
use crate::sde::{simulate_with_options, PathBundle, TimeGrid};
use crate::util::{mean, std_error};

/// Knobs of the backward pass. `keep_paths` retains the per-path value and
/// reflection increments for Skorokhod-style diagnostics at the cost of one
/// extra `paths * steps` array each.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub basis: BasisSpec,
    pub keep_paths: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            basis: BasisSpec::default(),
            keep_paths: false,
        }
    }
}

/// Simulation plus solve in one call; see [`estimate_u`].
#[derive(Debug, Clone, Copy)]
pub struct EstimateConfig {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    pub allow_nonconcave: bool,
    pub options: SolverOptions,
}

impl EstimateConfig {
    pub fn new(paths: usize, steps: usize, seed: u64) -> Self {
        EstimateConfig {
            paths,
            steps,
            seed,
            allow_nonconcave: false,
            options: SolverOptions::default(),
        }
    }
}

#[derive(Clone, Copy)]
enum Reflection {
    Off,
    Project,
    Penalize(f64),
}

/// Cross-sectional summary of one backward step, in forward time order.
#[derive(Debug, Clone, Serialize)]
pub struct StepStat {
    pub t: f64,
    pub mean_y: f64,
    pub mean_dk: f64,
    /// Mean pairing of reflection mass with the following obstacle slack.
    pub mean_skorokhod: f64,
    pub mean_z_norm: f64,
    pub condition: f64,
    pub kept: usize,
    pub truncated: usize,
}

/// Output of a backward solve.
///
/// `u0` and `stderr` are the mean and standard error of the pathwise
/// rollback estimator: each path carries its realized value backward with a
/// martingale control variate, restarting from the obstacle wherever the
/// fitted recursion decides to exercise. The cross-sectional fit alone would
/// have no honest error bar at a deterministic start state, and taking its
/// per-step maxima against the obstacle rectifies fit noise into an upward
/// drift; the rollback mean avoids both.
#[derive(Debug, Clone, Serialize)]
pub struct BsdeSolution {
    pub u0: f64,
    pub stderr: f64,
    /// Gradient proxy per rank at the start state (volatility-weighted).
    pub z0: Vec<f64>,
    /// Mean cumulative reflection mass over the horizon.
    pub k_mean: f64,
    /// Mean over paths of the discrete pairing of each reflection increment
    /// with the obstacle slack at the following grid point. Tends to zero
    /// under time refinement when the reflection is minimal.
    pub skorokhod_sum: f64,
    /// Worst obstacle violation `(h - Y)^+` over all paths and grid points.
    /// Exactly zero in projection mode; positive and shrinking with the
    /// intensity in penalized mode.
    pub max_violation: f64,
    pub paths: usize,
    pub steps: usize,
    pub step_stats: Vec<StepStat>,
    #[serde(skip)]
    y: Option<Vec<f64>>,
    #[serde(skip)]
    dk: Option<Vec<f64>>,
}

impl BsdeSolution {
    /// Fitted value of path `path` at grid index `k`; present only when the
    /// solve ran with `keep_paths`.
    pub fn y_at(&self, path: usize, k: usize) -> Option<f64> {
        self.y.as_ref().map(|ys| ys[path * (self.steps + 1) + k])
    }

    /// Reflection increment accrued at grid index `k < steps`.
    pub fn dk_at(&self, path: usize, k: usize) -> Option<f64> {
        self.dk.as_ref().map(|dk| dk[path * self.steps + k])
    }

    /// Maps the ranked gradient proxy back to name coordinates for the given
    /// start state. The flag reports a tie in the start state, in which case
    /// the assignment of gradients to names is one admissible choice.
    pub fn named_z0(&self, x0: &[f64]) -> Result<(Vec<f64>, bool)> {
        let view = rank_state(x0)?;
        let named = ranked_to_named_z(&self.z0, &view)?;
        Ok((named, view.has_tie()))
    }

    /// Writes the per-step summary as CSV. The Skorokhod column is the
    /// forward cumulative sum.
    pub fn write_step_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "k,t,mean_y,mean_dk,skorokhod_partial,condition,mean_z_norm,kept,truncated"
        )?;
        let mut partial = 0.0f64;
        for (k, s) in self.step_stats.iter().enumerate() {
            partial += s.mean_skorokhod;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                k, s.t, s.mean_y, s.mean_dk, partial, s.condition, s.mean_z_norm, s.kept,
                s.truncated
            )?;
        }
        Ok(())
    }
}

/// Solves the plain backward equation (no obstacle) on a simulated bundle.
pub fn solve_bsde(
    bundle: &PathBundle,
    profile: &CoefficientProfile,
    spec: &ProblemSpec,
    options: &SolverOptions,
) -> Result<BsdeSolution> {
    if spec.has_obstacle() {
        return Err(Error::validation(
            "problem declares an obstacle; use solve_reflected or solve_penalized",
        ));
    }
    backward(bundle, profile, spec, options, Reflection::Off)
}

/// Solves the reflected equation by projecting each implicit update onto the
/// obstacle. Without an obstacle this coincides with [`solve_bsde`] exactly.
pub fn solve_reflected(
    bundle: &PathBundle,
    profile: &CoefficientProfile,
    spec: &ProblemSpec,
    options: &SolverOptions,
) -> Result<BsdeSolution> {
    backward(bundle, profile, spec, options, Reflection::Project)
}

/// Solves the penalized equation with intensity `rho`: the obstacle enters
/// through the generator term `rho * (h - y)^+` instead of a projection.
/// Values increase toward the reflected solution as `rho` grows; `rho = 0`
/// reduces to the plain equation.
pub fn solve_penalized(
    bundle: &PathBundle,
    profile: &CoefficientProfile,
    spec: &ProblemSpec,
    rho: f64,
    options: &SolverOptions,
) -> Result<BsdeSolution> {
    if !(rho >= 0.0) {
        return Err(Error::validation("penalty intensity must be non-negative"));
    }
    if !spec.has_obstacle() {
        return Err(Error::validation(
            "penalized solve needs an obstacle descriptor",
        ));
    }
    backward(bundle, profile, spec, options, Reflection::Penalize(rho))
}

/// Estimates the value function at one point: simulates a fresh bundle from
/// `x0` over `[t0, t1]` and runs the reflected solve (which degrades to the
/// plain solve when the problem has no obstacle).
pub fn estimate_u(
    profile: &CoefficientProfile,
    spec: &ProblemSpec,
    x0: &SimplexPoint,
    t0: f64,
    t1: f64,
    cfg: &EstimateConfig,
) -> Result<BsdeSolution> {
    let grid = TimeGrid::new(t0, t1, cfg.steps)?;
    let bundle = simulate_with_options(
        profile,
        x0,
        &grid,
        cfg.paths,
        cfg.seed,
        cfg.allow_nonconcave,
    )?;
    solve_reflected(&bundle, profile, spec, &cfg.options)
}

/// Fitted continuation of the realized values for exercise decisions.
///
/// Rows where the obstacle sits at its cross-sectional floor are left out of
/// the fit and marked continue: with a payoff kink, the flat mass on the far
/// side would otherwise dominate the least squares exactly where the exercise
/// boundary lives. A constant obstacle admits no such restriction and the
/// full cross-section is used.
fn decision_continuation(
    raw: &DMatrix<f64>,
    hvals: &[f64],
    v_tilde: &[f64],
    full: &RegressionPlan,
) -> Result<Vec<f64>> {
    let m = hvals.len();
    let h_min = hvals.iter().cloned().fold(f64::INFINITY, f64::min);
    let active: Vec<usize> = (0..m).filter(|&i| hvals[i] > h_min).collect();
    let min_rows = 8 * (raw.ncols() + 1);
    if active.len() < min_rows || active.len() == m {
        return full.fit(v_tilde);
    }
    let sub = DMatrix::from_fn(active.len(), raw.ncols(), |r, c| raw[(active[r], c)]);
    let sub_plan = RegressionPlan::new(&sub)?;
    let target: Vec<f64> = active.iter().map(|&i| v_tilde[i]).collect();
    let fitted = sub_plan.fit(&target)?;
    let mut cont = vec![f64::INFINITY; m];
    for (pos, &i) in active.iter().enumerate() {
        cont[i] = fitted[pos];
    }
    Ok(cont)
}

fn backward(
    bundle: &PathBundle,
    profile: &CoefficientProfile,
    spec: &ProblemSpec,
    options: &SolverOptions,
    reflection: Reflection,
) -> Result<BsdeSolution> {
    bundle.check_dims(profile.n)?;
    let n = bundle.n;
    let m = bundle.paths;
    let steps = bundle.grid.steps();
    let dt = bundle.grid.dt();
    let horizon = bundle.grid.t1();

    let mut ranked = vec![0.0f64; n];
    if bundle.grid.is_degenerate() {
        // Zero horizon: the value is the terminal function at the start.
        bundle.ranked_state_into(0, 0, &mut ranked);
        let g = spec.terminal_value(&ranked);
        let h_t = spec.obstacle_value(horizon, &ranked, profile, horizon);
        return Ok(BsdeSolution {
            u0: g,
            stderr: 0.0,
            z0: vec![0.0; n],
            k_mean: 0.0,
            skorokhod_sum: 0.0,
            max_violation: (h_t - g).max(0.0),
            paths: m,
            steps,
            step_stats: Vec::new(),
            y: options.keep_paths.then(|| vec![g; m * (steps + 1)]),
            dk: options.keep_paths.then(|| vec![0.0; m * steps]),
        });
    }

    let exponents = options.basis.exponents(n);
    let p_raw = exponents.len() + usize::from(options.basis.obstacle_feature);

    let mut y_next = vec![0.0f64; m];
    let mut y_cur = vec![0.0f64; m];
    let mut v_tilde = vec![0.0f64; m];
    let mut k_total = vec![0.0f64; m];
    let mut sko_total = vec![0.0f64; m];
    let mut h_next = vec![0.0f64; m];
    let mut y_store = options.keep_paths.then(|| vec![0.0f64; m * (steps + 1)]);
    let mut dk_store = options.keep_paths.then(|| vec![0.0f64; m * steps]);
    let mut max_violation = 0.0f64;

    for i in 0..m {
        bundle.ranked_state_into(i, steps, &mut ranked);
        let g = spec.terminal_value(&ranked);
        if !g.is_finite() {
            return Err(Error::numerics("terminal value is not finite on a path"));
        }
        y_next[i] = g;
        v_tilde[i] = g;
        let h_t = spec.obstacle_value(horizon, &ranked, profile, horizon);
        h_next[i] = h_t;
        max_violation = max_violation.max(h_t - g);
        if let Some(ys) = y_store.as_deref_mut() {
            ys[i * (steps + 1) + steps] = g;
        }
    }

    let mut raw = DMatrix::zeros(m, p_raw);
    let mut mono = vec![0.0f64; exponents.len()];
    let mut hvals = vec![0.0f64; m];
    let mut dbeta = vec![0.0f64; n];
    let mut zbar = vec![0.0f64; n];
    let mut zcols: Vec<Vec<f64>> = vec![vec![0.0f64; m]; n];
    let mut z0 = vec![0.0f64; n];
    let mut stats_rev: Vec<StepStat> = Vec::with_capacity(steps);

    for k in (0..steps).rev() {
        let t = bundle.grid.time(k);
        for i in 0..m {
            bundle.ranked_state_into(i, k, &mut ranked);
            BasisSpec::eval_monomials(&exponents, &ranked, &mut mono);
            for (c, &v) in mono.iter().enumerate() {
                raw[(i, c)] = v;
            }
            hvals[i] = spec.obstacle_value(t, &ranked, profile, horizon);
            if options.basis.obstacle_feature {
                let feat = if spec.has_obstacle() {
                    hvals[i]
                } else {
                    spec.terminal_value(&ranked)
                };
                raw[(i, exponents.len())] = feat;
            }
        }
        let plan = RegressionPlan::new(&raw)?;
        let a = plan.fit(&y_next)?;
        // Continuation of the realized values, used only for the rollback's
        // exercise decisions. The fitted recursion `a` compounds per-step
        // maxima against the obstacle, so thresholding on it delays exercise
        // systematically; the realized-value fit has no such drift.
        let a_rolled = match reflection {
            Reflection::Project | Reflection::Penalize(_) if spec.has_obstacle() => {
                Some(decision_continuation(&raw, &hvals, &v_tilde, &plan)?)
            }
            _ => None,
        };
        // Gradient proxies: fit noise-weighted residuals. Subtracting the
        // continuation keeps the targets mean-zero, which kills most of the
        // regression variance and makes flat values give exact zeros.
        for i in 0..m {
            bundle.ranked_increments_into(i, k, &mut dbeta);
            let r = y_next[i] - a[i];
            for j in 0..n {
                zcols[j][i] = r * dbeta[j] / dt;
            }
        }
        for zc in zcols.iter_mut() {
            *zc = plan.fit(zc)?;
        }

        let slope = spec.generator.y_slope(t, profile);
        let denom = 1.0 - dt * slope;
        if denom <= 0.0 {
            return Err(Error::StepSize(dt));
        }
        let pen_denom = match reflection {
            Reflection::Penalize(rho) => denom + dt * rho,
            _ => denom,
        };
        if pen_denom <= 0.0 {
            return Err(Error::StepSize(dt));
        }

        let mut sum_dk = 0.0f64;
        let mut sum_sko = 0.0f64;
        let mut sum_znorm = 0.0f64;
        for i in 0..m {
            bundle.ranked_state_into(i, k, &mut ranked);
            bundle.ranked_increments_into(i, k, &mut dbeta);
            for j in 0..n {
                zbar[j] = zcols[j][i];
            }
            let alpha = spec.generator_value(t, &ranked, 0.0, &zbar, profile);
            if !alpha.is_finite() {
                return Err(Error::numerics("generator value is not finite on a path"));
            }
            let y_star = (a[i] + dt * alpha) / denom;
            let h = hvals[i];
            let (y_new, dk) = match reflection {
                Reflection::Off => (y_star, 0.0),
                Reflection::Project => {
                    let y = y_star.max(h);
                    (y, y - y_star)
                }
                Reflection::Penalize(rho) => {
                    if y_star >= h {
                        (y_star, 0.0)
                    } else {
                        // Active penalty branch; the solution sits between
                        // the unconstrained update and the obstacle.
                        let y = (a[i] + dt * alpha + dt * rho * h) / pen_denom;
                        (y, dt * rho * (h - y).max(0.0))
                    }
                }
            };
            max_violation = max_violation.max(h - y_new);
            let mut zdb = 0.0;
            for j in 0..n {
                zdb += zbar[j] * dbeta[j];
            }
            // The rollback applies the same implicit step to its own value,
            // so the discounting never touches the fitted recursion.
            let active = matches!(&a_rolled, Some(cont) if h > (cont[i] + dt * alpha) / denom);
            match reflection {
                Reflection::Project if active => {
                    // Exercise: the realized value restarts from the
                    // obstacle. Accumulating dk instead would rectify fit
                    // noise into a systematic upward drift.
                    v_tilde[i] = h;
                }
                Reflection::Penalize(rho) if active => {
                    // Partial restart with the implicit penalty weight; at
                    // zero intensity this is the plain step and as the
                    // intensity grows it tends to the projected restart.
                    let w = dt * rho / (denom + dt * rho);
                    let roll = (v_tilde[i] + dt * alpha - zdb) / denom;
                    v_tilde[i] = w * h + (1.0 - w) * roll;
                }
                _ => v_tilde[i] = (v_tilde[i] + dt * alpha - zdb) / denom,
            }
            k_total[i] += dk;
            if dk > 0.0 {
                // Pair the push with the slack one grid point later; the
                // same-index pairing is identically zero under projection.
                let s = (y_next[i] - h_next[i]) * dk;
                sko_total[i] += s;
                sum_sko += s;
            }
            y_cur[i] = y_new;
            sum_dk += dk;
            sum_znorm += zbar.iter().map(|z| z * z).sum::<f64>().sqrt();
            if let Some(ys) = y_store.as_deref_mut() {
                ys[i * (steps + 1) + k] = y_new;
            }
            if let Some(dks) = dk_store.as_deref_mut() {
                dks[i * steps + k] = dk;
            }
        }

        stats_rev.push(StepStat {
            t,
            mean_y: mean(&y_cur),
            mean_dk: sum_dk / m as f64,
            mean_skorokhod: sum_sko / m as f64,
            mean_z_norm: sum_znorm / m as f64,
            condition: plan.condition,
            kept: plan.kept,
            truncated: plan.truncated,
        });
        if k == 0 {
            for j in 0..n {
                z0[j] = mean(&zcols[j]);
            }
        }
        std::mem::swap(&mut y_next, &mut y_cur);
        h_next.copy_from_slice(&hvals);
    }

    stats_rev.reverse();
    Ok(BsdeSolution {
        u0: mean(&v_tilde),
        stderr: std_error(&v_tilde),
        z0,
        k_mean: mean(&k_total),
        skorokhod_sum: mean(&sko_total),
        max_violation: max_violation.max(0.0),
        paths: m,
        steps,
        step_stats: stats_rev,
        y: y_store,
        dk: dk_store,
    })
}
