use crate::error::{Error, Result};
use crate::model::CoefficientProfile;
use crate::pde::grid::SimplexGrid;

/// Transform rows from ranked to (sum, gaps) coordinates: row 0 is all ones,
/// row j is `e_j - e_{j+1}`.
pub(crate) fn transform_rows(n: usize) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; n]; n];
    for v in m[0].iter_mut() {
        *v = 1.0;
    }
    for j in 1..n {
        m[j][j - 1] = 1.0;
        m[j][j] = -1.0;
    }
    m
}

/// Constant coefficients of the generator in gap coordinates: the diffusion
/// matrix `A = M diag(sigma^2) M^T` and the drift `b = M delta`.
pub(crate) fn gap_coefficients(profile: &CoefficientProfile) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = profile.n;
    let m = transform_rows(n);
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for r in 0..n {
        for c in 0..n {
            a[r][c] = (0..n)
                .map(|i| m[r][i] * profile.sigma[i] * profile.sigma[i] * m[c][i])
                .sum();
        }
        b[r] = (0..n).map(|i| m[r][i] * profile.delta[i]).sum();
    }
    (a, b)
}

/// Spatial operator assembled once on a grid, stored row-wise with the
/// diagonal split out. Rows sum to zero because every boundary rule
/// (reflection ghosts on the gap faces, linear extrapolation outside)
/// preserves constants.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub nodes: usize,
    pub diag: Vec<f64>,
    row_ptr: Vec<u32>,
    cols: Vec<u32>,
    weights: Vec<f64>,
    /// Per-row sum of absolute off-diagonal weights, for dominance checks.
    pub abs_off: Vec<f64>,
    pub max_abs_diag: f64,
}

impl DiscreteOperator {
    /// True when every stencil entry vanishes, diagonal included.
    pub fn is_zero(&self) -> bool {
        self.weights.is_empty() && self.diag.iter().all(|&d| d == 0.0)
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let lo = self.row_ptr[i] as usize;
        let hi = self.row_ptr[i + 1] as usize;
        (&self.cols[lo..hi], &self.weights[lo..hi])
    }

    /// `out = L u`.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        for i in 0..self.nodes {
            let (cols, ws) = self.row(i);
            let mut acc = self.diag[i] * u[i];
            for (&c, &w) in cols.iter().zip(ws) {
                acc += w * u[c as usize];
            }
            out[i] = acc;
        }
    }
}

/// Stencil builder with boundary resolution.
///
/// Out-of-grid references are rewritten into in-grid ones, fixing axes in a
/// set order (sum first, then each gap). A gap reference below zero is a
/// ghost across the coincidence face: the mirror value minus `2 dx` times
/// the oblique target, which is zero for two particles and half the other
/// gap derivative for three. References outside a truncation edge linearly
/// extrapolate from the last two nodes. Tangential derivatives inside the
/// oblique target use clamped differences, so the rewrite terminates.
struct Assembler<'g> {
    grid: &'g SimplexGrid,
    counts: Vec<i64>,
}

impl<'g> Assembler<'g> {
    fn resolve(&self, c: &[i64], w: f64, out: &mut Vec<(usize, f64)>) {
        let dims = c.len();
        let mut bad = None;
        for a in 0..dims {
            if c[a] < 0 || c[a] >= self.counts[a] {
                bad = Some(a);
                break;
            }
        }
        let a = match bad {
            None => {
                let coords: Vec<usize> = c.iter().map(|&v| v as usize).collect();
                out.push((self.grid.index(&coords), w));
                return;
            }
            Some(a) => a,
        };
        debug_assert!(c[a] == -1 || c[a] == self.counts[a]);
        let face = a >= 1 && c[a] < 0;
        if !face {
            // Truncation edge: zero second normal derivative.
            let (edge, inner) = if c[a] < 0 {
                (0, 1)
            } else {
                (self.counts[a] - 1, self.counts[a] - 2)
            };
            let mut e = c.to_vec();
            e[a] = edge;
            self.resolve(&e, 2.0 * w, out);
            e[a] = inner;
            self.resolve(&e, -w, out);
            return;
        }
        // Coincidence face of gap axis `a`: mirror minus the oblique target.
        let mut r = c.to_vec();
        r[a] = 1;
        self.resolve(&r, w, out);
        if dims == 3 {
            let other = if a == 1 { 2 } else { 1 };
            let dx = self.grid.axes[a].spacing();
            let mut f = c.to_vec();
            f[a] = 0;
            // -2 dx * (1/2) * D_other, with D_other by clamped differences.
            for (refc, coef) in self.tangential(&f, other) {
                self.resolve(&refc, -w * dx * coef, out);
            }
        }
    }

    /// First-derivative references along `axis`: central when both
    /// neighbors exist, one-sided at the ends. The base point is clamped
    /// into range first, so corner ghosts terminate without recursing.
    fn tangential(&self, base: &[i64], axis: usize) -> Vec<(Vec<i64>, f64)> {
        let mut base: Vec<i64> = base.to_vec();
        for (v, &c) in base.iter_mut().zip(&self.counts) {
            *v = (*v).clamp(0, c - 1);
        }
        let dx = self.grid.axes[axis].spacing();
        let i = base[axis];
        let last = self.counts[axis] - 1;
        let mut refs = Vec::with_capacity(2);
        if i > 0 && i < last {
            let mut p = base.clone();
            p[axis] += 1;
            refs.push((p, 0.5 / dx));
            let mut m = base.clone();
            m[axis] -= 1;
            refs.push((m, -0.5 / dx));
        } else if i == 0 {
            let mut p = base.clone();
            p[axis] += 1;
            refs.push((p, 1.0 / dx));
            refs.push((base, -1.0 / dx));
        } else {
            let mut m = base.clone();
            m[axis] -= 1;
            refs.push((base, 1.0 / dx));
            refs.push((m, -1.0 / dx));
        }
        refs
    }
}

#[derive(Clone, Copy, PartialEq)]
pub(crate) enum Part {
    All,
    Axis,
    Cross,
}

/// Builds the finite-difference form of the generator on the grid: central
/// second differences per axis, the 4-point cross stencil per axis pair, and
/// central first differences for the drift.
///
/// Rejects meshes whose spacing ratio lets a cross coefficient overwhelm the
/// axis diffusion budgets; the error reports the admissible ratio band.
pub fn assemble_operator(
    profile: &CoefficientProfile,
    grid: &SimplexGrid,
) -> Result<DiscreteOperator> {
    assemble_part(profile, grid, Part::All)
}

/// Axis and cross contributions as separate operators. The time stepper
/// keeps the axis part implicit and lags the cross part one level, which
/// preserves an M-matrix system at any step size; the split is exact,
/// axis + cross = full.
pub(crate) fn assemble_split(
    profile: &CoefficientProfile,
    grid: &SimplexGrid,
) -> Result<(DiscreteOperator, DiscreteOperator)> {
    Ok((
        assemble_part(profile, grid, Part::Axis)?,
        assemble_part(profile, grid, Part::Cross)?,
    ))
}

pub(crate) fn assemble_part(
    profile: &CoefficientProfile,
    grid: &SimplexGrid,
    part: Part,
) -> Result<DiscreteOperator> {
    grid.validate()?;
    if profile.n != grid.n {
        return Err(Error::validation(format!(
            "profile has {} particles, grid has {}",
            profile.n, grid.n
        )));
    }
    let dims = grid.dims();
    let (a_mat, b_vec) = gap_coefficients(profile);
    let spacing: Vec<f64> = grid.axes.iter().map(|ax| ax.spacing()).collect();

    for ai in 0..dims {
        for bi in (ai + 1)..dims {
            let c = a_mat[ai][bi];
            if c == 0.0 {
                continue;
            }
            let beta_a = 0.5 * a_mat[ai][ai];
            let beta_b = 0.5 * a_mat[bi][bi];
            let r = spacing[bi] / spacing[ai];
            let lo = c.abs() / (2.0 * beta_a);
            let hi = 2.0 * beta_b / c.abs();
            let slack = 1e-12;
            if r < lo * (1.0 - slack) || r > hi * (1.0 + slack) {
                return Err(Error::validation(format!(
                    "cross-derivative coefficient {c:.6} between axes {ai} and {bi} \
                     breaks diagonal dominance at spacing ratio {r:.6}; \
                     admissible ratio band [{lo:.6}, {hi:.6}]"
                )));
            }
        }
    }

    let asm = Assembler {
        grid,
        counts: grid.axes.iter().map(|ax| ax.count as i64).collect(),
    };
    let nodes = grid.nodes();
    let mut diag = vec![0.0f64; nodes];
    let mut row_ptr = Vec::with_capacity(nodes + 1);
    let mut cols: Vec<u32> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut abs_off = vec![0.0f64; nodes];
    row_ptr.push(0u32);

    let mut refs: Vec<(usize, f64)> = Vec::with_capacity(32);
    let mut merged: Vec<(usize, f64)> = Vec::with_capacity(16);
    for idx in 0..nodes {
        let base: Vec<i64> = grid.coords(idx).iter().map(|&v| v as i64).collect();
        refs.clear();
        if part != Part::Cross {
            for a in 0..dims {
                let beta = 0.5 * a_mat[a][a] / (spacing[a] * spacing[a]);
                let mut p = base.clone();
                p[a] += 1;
                asm.resolve(&p, beta, &mut refs);
                asm.resolve(&base, -2.0 * beta, &mut refs);
                p[a] = base[a] - 1;
                asm.resolve(&p, beta, &mut refs);

                let drift = b_vec[a] / (2.0 * spacing[a]);
                if drift != 0.0 {
                    p[a] = base[a] + 1;
                    asm.resolve(&p, drift, &mut refs);
                    p[a] = base[a] - 1;
                    asm.resolve(&p, -drift, &mut refs);
                }
            }
        }
        if part != Part::Axis {
            for a in 0..dims {
                for b in (a + 1)..dims {
                    let cc = a_mat[a][b];
                    if cc == 0.0 {
                        continue;
                    }
                    let wq = cc / (4.0 * spacing[a] * spacing[b]);
                    for (sa, sb) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
                        let mut p = base.clone();
                        p[a] += sa;
                        p[b] += sb;
                        asm.resolve(&p, (sa * sb) as f64 * wq, &mut refs);
                    }
                }
            }
        }

        merged.clear();
        refs.sort_unstable_by_key(|&(i, _)| i);
        for &(i, w) in refs.iter() {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += w,
                _ => merged.push((i, w)),
            }
        }
        for &(i, w) in merged.iter() {
            if i == idx {
                diag[idx] += w;
            } else if w != 0.0 {
                cols.push(i as u32);
                weights.push(w);
                abs_off[idx] += w.abs();
            }
        }
        row_ptr.push(cols.len() as u32);
    }

    let max_abs_diag = diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    Ok(DiscreteOperator {
        nodes,
        diag,
        row_ptr,
        cols,
        weights,
        abs_off,
        max_abs_diag,
    })
}
