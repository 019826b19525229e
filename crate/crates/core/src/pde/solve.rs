use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{CoefficientProfile, ProblemSpec};
use crate::pde::grid::SimplexGrid;
use crate::pde::operator::{assemble_split, transform_rows, DiscreteOperator};

/// Obstacle treatment of the time stepper.
#[derive(Debug, Clone, Copy)]
pub enum PdeMode {
    /// Solve the linear step, then clamp to the obstacle. Exact feasibility
    /// on the grid. Without an obstacle this is the plain linear scheme.
    Projected,
    /// Penalty term with the given intensity inside the implicit solve; the
    /// solution may dip below the obstacle by O(1/intensity).
    Penalized(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct PdeOptions {
    /// Time weighting in [1/2, 1]; 1 is fully implicit.
    pub theta: f64,
    pub sor_omega: f64,
    /// Relative sweep-to-sweep stopping threshold of the iterative solve.
    pub sor_tol: f64,
    pub max_sweeps: usize,
    /// Solve the per-step complementarity problem by projected sweeps
    /// instead of projecting after the linear solve.
    pub force_psor: bool,
    /// Retain every time level for probing and export.
    pub keep_history: bool,
}

impl Default for PdeOptions {
    fn default() -> Self {
        PdeOptions {
            theta: 1.0,
            sor_omega: 1.5,
            sor_tol: 1e-10,
            max_sweeps: 20_000,
            force_psor: false,
            keep_history: false,
        }
    }
}

/// Value surface produced by the time stepper.
///
/// `values` and `contact` are the level at the initial time. When history is
/// kept, levels run forward in time and the terminal level is the payoff
/// exactly.
#[derive(Debug, Clone, Serialize)]
pub struct GridSolution {
    pub grid: SimplexGrid,
    pub values: Vec<f64>,
    pub contact: Vec<bool>,
    /// Per level, worst gap between the inward one-sided gap derivative and
    /// the face target, off-contact and away from truncation edges.
    pub boundary_residuals: Vec<f64>,
    /// Per level, max-norm of `min(u - h, scheme residual)`.
    pub complementarity: Vec<f64>,
    pub total_sweeps: usize,
    pub max_level_sweeps: usize,
    #[serde(skip)]
    history: Option<Vec<f64>>,
    #[serde(skip)]
    contact_history: Option<Vec<bool>>,
}

/// Face-condition residual summary; see [`GridSolution::boundary_residuals`].
#[derive(Debug, Clone, Serialize)]
pub struct BoundaryReport {
    pub max: f64,
    pub per_level: Vec<f64>,
}

pub fn boundary_residual(sol: &GridSolution) -> BoundaryReport {
    BoundaryReport {
        max: sol
            .boundary_residuals
            .iter()
            .fold(0.0f64, |m, v| m.max(*v)),
        per_level: sol.boundary_residuals.clone(),
    }
}

impl GridSolution {
    pub fn complementarity_max(&self) -> f64 {
        self.complementarity.iter().fold(0.0f64, |m, v| m.max(*v))
    }

    /// Grid values at time level `k` (0 = initial time). Levels other than 0
    /// require history.
    pub fn level(&self, k: usize) -> Result<&[f64]> {
        let nodes = self.grid.nodes();
        if let Some(h) = &self.history {
            let levels = h.len() / nodes;
            if k >= levels {
                return Err(Error::validation(format!("level {k} out of range")));
            }
            return Ok(&h[k * nodes..(k + 1) * nodes]);
        }
        if k == 0 {
            return Ok(&self.values);
        }
        Err(Error::validation(
            "time level unavailable: solve with keep_history",
        ))
    }

    /// Value at `(t, x)` with multilinear space interpolation and linear
    /// time interpolation. `x` is in ranked coordinates. Points outside the
    /// grid box are an error, as are interior times without history.
    pub fn probe(&self, t: f64, ranked: &[f64]) -> Result<f64> {
        let time = &self.grid.time;
        let span = (time.t1() - time.t0()).abs().max(1.0);
        if t < time.t0() - 1e-9 * span || t > time.t1() + 1e-9 * span {
            return Err(Error::validation(format!(
                "probe time {t} outside [{}, {}]",
                time.t0(),
                time.t1()
            )));
        }
        let loc = self.grid.locate(ranked)?;
        if self.history.is_none() {
            if (t - time.t0()).abs() > 1e-9 * span {
                return Err(Error::validation(
                    "interior-time probe requires keep_history",
                ));
            }
            return Ok(self.interp_level(&self.values, &loc));
        }
        if time.is_degenerate() {
            return Ok(self.interp_level(self.level(0)?, &loc));
        }
        let pos = (t - time.t0()) / time.dt();
        let k = (pos.floor() as usize).min(time.steps().saturating_sub(1));
        let frac = (pos - k as f64).clamp(0.0, 1.0);
        let lo = self.interp_level(self.level(k)?, &loc);
        if frac == 0.0 {
            return Ok(lo);
        }
        let hi = self.interp_level(self.level(k + 1)?, &loc);
        Ok((1.0 - frac) * lo + frac * hi)
    }

    fn interp_level(&self, level: &[f64], loc: &[(usize, f64)]) -> f64 {
        let dims = loc.len();
        let mut acc = 0.0;
        for corner in 0..(1usize << dims) {
            let mut w = 1.0;
            let mut coords = Vec::with_capacity(dims);
            for (a, &(cell, frac)) in loc.iter().enumerate() {
                if corner >> a & 1 == 1 {
                    w *= frac;
                    coords.push(cell + 1);
                } else {
                    w *= 1.0 - frac;
                    coords.push(cell);
                }
            }
            if w != 0.0 {
                acc += w * level[self.grid.index(&coords)];
            }
        }
        acc
    }

    /// CSV export: one row per node (and per time level when history is
    /// kept), columns `t`, the gap coordinates, `u`, and the contact flag.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let dims = self.grid.dims();
        let mut header = String::from("t,s");
        for j in 1..dims {
            header.push_str(&format!(",gap{j}"));
        }
        header.push_str(",u,contact");
        writeln!(w, "{header}")?;
        let nodes = self.grid.nodes();
        let levels: Vec<(f64, &[f64], Option<&[bool]>)> = match (&self.history, &self.contact_history) {
            (Some(h), Some(c)) => (0..h.len() / nodes)
                .map(|k| {
                    (
                        self.grid.time.time(k),
                        &h[k * nodes..(k + 1) * nodes],
                        Some(&c[k * nodes..(k + 1) * nodes]),
                    )
                })
                .collect(),
            _ => vec![(
                self.grid.time.t0(),
                self.values.as_slice(),
                Some(self.contact.as_slice()),
            )],
        };
        for (t, u, contact) in levels {
            for i in 0..nodes {
                let xi = self.grid.xi_point(i);
                let mut row = format!("{t}");
                for v in xi {
                    row.push_str(&format!(",{v}"));
                }
                let flag = contact.map(|c| c[i]).unwrap_or(false);
                writeln!(w, "{row},{},{}", u[i], u8::from(flag))?;
            }
        }
        Ok(())
    }
}

/// Backward time stepper for the obstacle problem on a gap-coordinate grid.
///
/// Each step treats the diffusion implicitly with weight `theta`, the
/// generator's value slope implicitly, and its gradient argument lagged from
/// the previous time level to keep the system linear. The obstacle is
/// applied per [`PdeMode`].
pub fn solve_obstacle(
    profile: &CoefficientProfile,
    spec: &ProblemSpec,
    grid: &SimplexGrid,
    mode: PdeMode,
    options: &PdeOptions,
) -> Result<GridSolution> {
    if !(0.5..=1.0).contains(&options.theta) {
        return Err(Error::validation(format!(
            "theta must lie in [0.5, 1], got {}",
            options.theta
        )));
    }
    if !(options.sor_omega > 0.0 && options.sor_omega < 2.0) {
        return Err(Error::validation(format!(
            "sor_omega must lie in (0, 2), got {}",
            options.sor_omega
        )));
    }
    if !(options.sor_tol > 0.0) || options.max_sweeps == 0 {
        return Err(Error::validation("sor_tol and max_sweeps must be positive"));
    }
    if let PdeMode::Penalized(m) = mode {
        if !(m >= 0.0) {
            return Err(Error::validation("penalty intensity must be non-negative"));
        }
        if !spec.has_obstacle() {
            return Err(Error::validation(
                "penalized mode needs an obstacle descriptor",
            ));
        }
    }
    spec.generator.validate_dims(grid.n)?;
    spec.terminal.validate_dims(grid.n)?;
    spec.obstacle.validate_dims(grid.n)?;

    // The axis part (second differences plus drift) is stepped implicitly;
    // the cross-derivative part is lagged one level like the gradients, which
    // keeps the implicit matrix diagonally dominant at any step size. The
    // mesh-ratio band enforced at assembly bounds the lagged part by the
    // implicit diffusion, so the combined step stays stable.
    let (op, cross) = assemble_split(profile, grid)?;
    let has_cross = !cross.is_zero();
    let nodes = grid.nodes();
    let dims = grid.dims();
    let n = grid.n;
    let time = grid.time;
    let steps = time.steps();
    let horizon = time.t1();
    let keep = options.keep_history;

    let ranked_flat: Vec<f64> = (0..nodes).flat_map(|i| grid.ranked_point(i)).collect();
    let ranked_at = |i: usize| &ranked_flat[i * n..(i + 1) * n];

    let mut u_next = vec![0.0f64; nodes];
    let mut hvals = vec![0.0f64; nodes];
    for i in 0..nodes {
        let g = spec.terminal_value(ranked_at(i));
        if !g.is_finite() {
            return Err(Error::numerics(format!(
                "terminal value not finite at grid node {i}"
            )));
        }
        u_next[i] = g;
        hvals[i] = spec.obstacle_value(horizon, ranked_at(i), profile, horizon);
    }
    let contact_of = |u: &[f64], h: &[f64]| -> Vec<bool> {
        u.iter()
            .zip(h)
            .map(|(&u, &h)| u - h <= 1e-9 * (1.0 + u.abs()))
            .collect()
    };

    let mut history = keep.then(|| vec![0.0f64; (steps + 1) * nodes]);
    let mut contact_history = keep.then(|| vec![false; (steps + 1) * nodes]);
    let terminal_contact = contact_of(&u_next, &hvals);
    if let Some(h) = history.as_deref_mut() {
        h[steps * nodes..].copy_from_slice(&u_next);
    }
    if let Some(c) = contact_history.as_deref_mut() {
        c[steps * nodes..].copy_from_slice(&terminal_contact);
    }

    let m_rows = transform_rows(n);
    let mut boundary_residuals = vec![0.0f64; steps + 1];
    let mut complementarity = vec![0.0f64; steps + 1];
    boundary_residuals[steps] = face_residual(grid, &u_next, &terminal_contact, dims);

    if time.is_degenerate() || steps == 0 {
        let contact = terminal_contact;
        return Ok(GridSolution {
            grid: grid.clone(),
            values: u_next,
            contact,
            boundary_residuals,
            complementarity,
            total_sweeps: 0,
            max_level_sweeps: 0,
            history,
            contact_history,
        });
    }

    let dt = time.dt();
    let theta = options.theta;
    let mut u_cur = vec![0.0f64; nodes];
    let mut rhs = vec![0.0f64; nodes];
    let mut lwork = vec![0.0f64; nodes];
    let mut cwork = vec![0.0f64; nodes];
    let mut alpha = vec![0.0f64; nodes];
    let mut grads = vec![0.0f64; dims * nodes];
    let mut zbar = vec![0.0f64; n];
    let mut total_sweeps = 0usize;
    let mut max_level_sweeps = 0usize;
    let tri = dims == 1 && !options.force_psor && matches!(mode, PdeMode::Projected);

    for k in (0..steps).rev() {
        let t = time.time(k);
        let t_next = time.time(k + 1);
        let slope = spec.generator.y_slope(t, profile);

        lagged_gradients(grid, &u_next, dims, &mut grads);
        for i in 0..nodes {
            for j in 0..n {
                let mut d = 0.0;
                for a in 0..dims {
                    d += m_rows[a][j] * grads[a * nodes + i];
                }
                zbar[j] = profile.sigma[j] * d;
            }
            let a = spec.generator_value(t, ranked_at(i), 0.0, &zbar, profile);
            if !a.is_finite() {
                return Err(Error::numerics(format!(
                    "generator value not finite at grid node {i}"
                )));
            }
            alpha[i] = a;
        }
        for i in 0..nodes {
            hvals[i] = spec.obstacle_value(t, ranked_at(i), profile, horizon);
        }

        if has_cross {
            cross.apply(&u_next, &mut cwork);
        }
        if theta < 1.0 {
            let slope_next = spec.generator.y_slope(t_next, profile);
            let explicit = (1.0 - theta) * dt;
            let bound = explicit * (op.max_abs_diag + (-slope_next).max(0.0));
            if bound > 1.0 + 1e-12 {
                return Err(Error::validation(format!(
                    "explicit part of the theta scheme is unstable: \
                     (1-theta) dt max|L_ii| = {bound:.3}; reduce dt, coarsen \
                     the grid, or raise theta"
                )));
            }
            op.apply(&u_next, &mut lwork);
            for i in 0..nodes {
                rhs[i] = u_next[i]
                    + explicit * (lwork[i] + slope_next * u_next[i])
                    + dt * (alpha[i] + cwork[i]);
            }
        } else {
            for i in 0..nodes {
                rhs[i] = u_next[i] + dt * (alpha[i] + cwork[i]);
            }
        }

        let idt = theta * dt;
        let mut min_margin = f64::INFINITY;
        let mut max_row = 0.0f64;
        for i in 0..nodes {
            let d = 1.0 - idt * (op.diag[i] + slope);
            let margin = d - idt * op.abs_off[i];
            min_margin = min_margin.min(margin);
            max_row = max_row.max(d + idt * op.abs_off[i]);
        }
        if min_margin <= 0.0 {
            return Err(Error::numerics(format!(
                "implicit system is not diagonally dominant at dt = {dt:.3e} \
                 (margin {min_margin:.3e}, condition estimate {:.3e}); reduce dt",
                max_row / min_margin.abs().max(f64::MIN_POSITIVE)
            )));
        }
        let cond_est = max_row / min_margin;

        u_cur.copy_from_slice(&u_next);
        let sweeps = if tri {
            solve_tridiagonal(&op, idt, slope, &rhs, &mut u_cur)?;
            1
        } else {
            sor_solve(
                &op, idt, slope, &rhs, &hvals, mode, options, cond_est, &mut u_cur,
            )?
        };
        total_sweeps += sweeps;
        max_level_sweeps = max_level_sweeps.max(sweeps);

        if matches!(mode, PdeMode::Projected) {
            for (u, &h) in u_cur.iter_mut().zip(&hvals) {
                if *u < h {
                    *u = h;
                }
            }
        }

        let contact = contact_of(&u_cur, &hvals);
        boundary_residuals[k] = face_residual(grid, &u_cur, &contact, dims);
        op.apply(&u_cur, &mut lwork);
        if has_cross {
            cross.apply(&u_cur, &mut cwork);
        }
        let mut comp = 0.0f64;
        for i in 0..nodes {
            let resid = -(u_next[i] - u_cur[i]) / dt
                - (lwork[i] + cwork[i])
                - (alpha[i] + slope * u_cur[i]);
            let c = (u_cur[i] - hvals[i]).min(resid);
            comp = comp.max(c.abs());
        }
        complementarity[k] = comp;

        if let Some(h) = history.as_deref_mut() {
            h[k * nodes..(k + 1) * nodes].copy_from_slice(&u_cur);
        }
        if let Some(ch) = contact_history.as_deref_mut() {
            ch[k * nodes..(k + 1) * nodes].copy_from_slice(&contact);
        }
        std::mem::swap(&mut u_next, &mut u_cur);
    }

    let contact = {
        for i in 0..nodes {
            hvals[i] = spec.obstacle_value(time.t0(), ranked_at(i), profile, horizon);
        }
        contact_of(&u_next, &hvals)
    };
    Ok(GridSolution {
        grid: grid.clone(),
        values: u_next,
        contact,
        boundary_residuals,
        complementarity,
        total_sweeps,
        max_level_sweeps,
        history,
        contact_history,
    })
}

/// Clamped first differences of `u` along every axis, with the face rows
/// overridden by the exact face condition: zero gap slope for two particles,
/// half the other gap slope for three, zero at the face corner.
fn lagged_gradients(grid: &SimplexGrid, u: &[f64], dims: usize, grads: &mut [f64]) {
    let nodes = grid.nodes();
    for a in 0..dims {
        let stride = grid.stride(a);
        let count = grid.axes[a].count;
        let dx = grid.axes[a].spacing();
        let out = a * nodes;
        for i in 0..nodes {
            let pos = i / stride % count;
            let d = if pos > 0 && pos < count - 1 {
                (u[i + stride] - u[i - stride]) / (2.0 * dx)
            } else if pos == 0 {
                (u[i + stride] - u[i]) / dx
            } else {
                (u[i] - u[i - stride]) / dx
            };
            grads[out + i] = d;
        }
    }
    if dims == 2 {
        let stride = grid.stride(1);
        let count = grid.axes[1].count;
        for i in 0..nodes {
            if i / stride % count == 0 {
                grads[nodes + i] = 0.0;
            }
        }
    } else if dims == 3 {
        for (a, other) in [(1usize, 2usize), (2, 1)] {
            let stride_a = grid.stride(a);
            let count_a = grid.axes[a].count;
            let stride_o = grid.stride(other);
            let count_o = grid.axes[other].count;
            for i in 0..nodes {
                if i / stride_a % count_a != 0 {
                    continue;
                }
                grads[a * nodes + i] = if i / stride_o % count_o == 0 {
                    0.0
                } else {
                    0.5 * grads[other * nodes + i]
                };
            }
        }
    }
}

/// Max residual of the face condition measured with inward one-sided
/// differences, skipping contact nodes and truncation edges.
fn face_residual(grid: &SimplexGrid, u: &[f64], contact: &[bool], dims: usize) -> f64 {
    if dims == 1 {
        return 0.0;
    }
    let nodes = grid.nodes();
    let mut worst = 0.0f64;
    for a in 1..dims {
        let stride_a = grid.stride(a);
        let count_a = grid.axes[a].count;
        let dx_a = grid.axes[a].spacing();
        for i in 0..nodes {
            if i / stride_a % count_a != 0 || contact[i] {
                continue;
            }
            let coords = grid.coords(i);
            if coords[0] == 0 || coords[0] == grid.axes[0].count - 1 {
                continue;
            }
            let mut skip = false;
            for o in 1..dims {
                if o != a && coords[o] == grid.axes[o].count - 1 {
                    skip = true;
                }
            }
            if skip {
                continue;
            }
            let one_sided = (u[i + stride_a] - u[i]) / dx_a;
            let target = if dims == 3 {
                let other = if a == 1 { 2 } else { 1 };
                let stride_o = grid.stride(other);
                let count_o = grid.axes[other].count;
                let dx_o = grid.axes[other].spacing();
                let po = coords[other];
                let d_other = if po > 0 && po < count_o - 1 {
                    (u[i + stride_o] - u[i - stride_o]) / (2.0 * dx_o)
                } else if po == 0 {
                    (u[i + stride_o] - u[i]) / dx_o
                } else {
                    (u[i] - u[i - stride_o]) / dx_o
                };
                0.5 * d_other
            } else {
                0.0
            };
            worst = worst.max((one_sided - target).abs());
        }
    }
    worst
}

/// Gauss-Seidel sweeps with relaxation on `(I - idt (L + slope)) x = rhs`,
/// with the obstacle folded in per mode. Returns the sweep count.
#[allow(clippy::too_many_arguments)]
fn sor_solve(
    op: &DiscreteOperator,
    idt: f64,
    slope: f64,
    rhs: &[f64],
    hvals: &[f64],
    mode: PdeMode,
    options: &PdeOptions,
    cond_est: f64,
    x: &mut [f64],
) -> Result<usize> {
    let nodes = op.nodes;
    let omega = options.sor_omega;
    let psor = options.force_psor && matches!(mode, PdeMode::Projected);
    let penalty = match mode {
        PdeMode::Penalized(m) => Some(m),
        PdeMode::Projected => None,
    };
    for sweep in 1..=options.max_sweeps {
        let mut delta = 0.0f64;
        let mut scale = 1.0f64;
        for i in 0..nodes {
            let (cols, ws) = op.row(i);
            let mut s = 0.0;
            for (&c, &w) in cols.iter().zip(ws) {
                s += w * x[c as usize];
            }
            let diag = 1.0 - idt * (op.diag[i] + slope);
            let num = rhs[i] + idt * s;
            let mut gs = num / diag;
            if let Some(m) = penalty {
                if m > 0.0 && gs < hvals[i] {
                    gs = (num + idt * m * hvals[i]) / (diag + idt * m);
                }
            }
            let mut next = (1.0 - omega) * x[i] + omega * gs;
            if psor && next < hvals[i] {
                next = hvals[i];
            }
            delta = delta.max((next - x[i]).abs());
            scale = scale.max(next.abs());
            x[i] = next;
        }
        if delta <= options.sor_tol * scale {
            return Ok(sweep);
        }
    }
    Err(Error::numerics(format!(
        "iterative linear solve stalled after {} sweeps (condition estimate {cond_est:.3e}); \
         raise max_sweeps or loosen sor_tol",
        options.max_sweeps
    )))
}

/// Direct solve of the one-dimensional implicit system; rows reach at most
/// one neighbor each side by construction.
fn solve_tridiagonal(
    op: &DiscreteOperator,
    idt: f64,
    slope: f64,
    rhs: &[f64],
    x: &mut [f64],
) -> Result<()> {
    let nodes = op.nodes;
    let mut lower = vec![0.0f64; nodes];
    let mut diag = vec![0.0f64; nodes];
    let mut upper = vec![0.0f64; nodes];
    for i in 0..nodes {
        diag[i] = 1.0 - idt * (op.diag[i] + slope);
        let (cols, ws) = op.row(i);
        for (&c, &w) in cols.iter().zip(ws) {
            let c = c as usize;
            if c + 1 == i {
                lower[i] = -idt * w;
            } else if c == i + 1 {
                upper[i] = -idt * w;
            } else {
                return Err(Error::numerics(
                    "one-dimensional operator row is not tridiagonal",
                ));
            }
        }
    }
    // Thomas elimination; dominance was checked by the caller.
    let mut c_star = vec![0.0f64; nodes];
    let mut d_star = vec![0.0f64; nodes];
    let mut den = diag[0];
    if den.abs() < 1e-300 {
        return Err(Error::numerics("tridiagonal pivot underflow"));
    }
    c_star[0] = upper[0] / den;
    d_star[0] = rhs[0] / den;
    for i in 1..nodes {
        den = diag[i] - lower[i] * c_star[i - 1];
        if den.abs() < 1e-300 {
            return Err(Error::numerics("tridiagonal pivot underflow"));
        }
        c_star[i] = upper[i] / den;
        d_star[i] = (rhs[i] - lower[i] * d_star[i - 1]) / den;
    }
    x[nodes - 1] = d_star[nodes - 1];
    for i in (0..nodes - 1).rev() {
        x[i] = d_star[i] - c_star[i] * x[i + 1];
    }
    Ok(())
}
