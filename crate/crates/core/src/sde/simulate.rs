use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{CoefficientProfile, SimplexPoint};
use crate::sde::bundle::{BundleDiagnostics, PathBundle};
use crate::sde::rng::path_stream;
use crate::sde::TimeGrid;
use crate::util::PATH_CHUNK;

/// Relative threshold under which two adjacent gaps count as a near-triple
/// contact.
const TRIPLE_PROXIMITY: f64 = 1e-9;

#[derive(Clone, Copy)]
enum Coefficients {
    /// Each particle takes exactly the coefficient of its rank.
    Exact,
    /// Softmin blend with weights `exp(-m |X_i - X_(j)|)`, row-normalized.
    Softmin(f64),
}

/// Simulates with rank-exact coefficient assignment. Requires a concave
/// squared-volatility profile; see [`simulate_with_options`] to override.
pub fn simulate(
    profile: &CoefficientProfile,
    x0: &SimplexPoint,
    grid: &TimeGrid,
    paths: usize,
    seed: u64,
) -> Result<PathBundle> {
    simulate_with_options(profile, x0, grid, paths, seed, false)
}

/// As [`simulate`], with an explicit escape hatch for non-concave profiles.
/// Overridden runs should inspect `diagnostics.triple_proximity_events`.
pub fn simulate_with_options(
    profile: &CoefficientProfile,
    x0: &SimplexPoint,
    grid: &TimeGrid,
    paths: usize,
    seed: u64,
    allow_nonconcave: bool,
) -> Result<PathBundle> {
    if !profile.is_concave() && !allow_nonconcave {
        return Err(Error::validation(
            "squared volatilities are not concave across ranks; triple collisions are not \
             excluded (pass allow_nonconcave to simulate anyway)",
        ));
    }
    run(profile, x0, grid, paths, seed, Coefficients::Exact, None)
}

/// Simulates with softmin-smoothed coefficients at temperature `1/m`,
/// consuming the same noise stream as [`simulate`] under the same seed.
/// Coefficients are continuous in the state and collapse to the rank-exact
/// assignment as `m` grows, away from ties.
pub fn smoothed_simulate(
    profile: &CoefficientProfile,
    x0: &SimplexPoint,
    grid: &TimeGrid,
    paths: usize,
    seed: u64,
    m: f64,
) -> Result<PathBundle> {
    if !(m > 0.0) {
        return Err(Error::validation("softmin parameter m must be positive"));
    }
    run(
        profile,
        x0,
        grid,
        paths,
        seed,
        Coefficients::Softmin(m),
        Some(m),
    )
}

fn run(
    profile: &CoefficientProfile,
    x0: &SimplexPoint,
    grid: &TimeGrid,
    paths: usize,
    seed: u64,
    coeffs: Coefficients,
    smoothing: Option<f64>,
) -> Result<PathBundle> {
    let n = profile.n;
    if x0.n() != n {
        return Err(Error::validation(format!(
            "initial point has {} coordinates but profile expects {}",
            x0.n(),
            n
        )));
    }
    if paths == 0 {
        return Err(Error::validation("need at least one path"));
    }
    if n > u8::MAX as usize {
        return Err(Error::validation("particle count exceeds supported maximum"));
    }
    let steps = grid.steps();
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();

    let mut x = vec![0.0f64; paths * (steps + 1) * n];
    let mut dw = vec![0.0f64; paths * steps * n];
    let mut perm = vec![0u8; paths * (steps + 1) * n];

    let x_stride = (steps + 1) * n;
    let w_stride = steps * n;

    let chunk_stats: Vec<(usize, usize)> = x
        .par_chunks_mut(PATH_CHUNK * x_stride)
        .zip(dw.par_chunks_mut(PATH_CHUNK * w_stride))
        .zip(perm.par_chunks_mut(PATH_CHUNK * x_stride))
        .enumerate()
        .map(|(chunk_id, ((xc, wc), pc))| {
            let base = chunk_id * PATH_CHUNK;
            let local_paths = xc.len() / x_stride;
            let mut ties = 0usize;
            let mut triples = 0usize;
            let mut cur = vec![0.0f64; n];
            let mut ranked = vec![0.0f64; n];
            let mut order: Vec<usize> = (0..n).collect();
            let mut weights = vec![0.0f64; n];
            for lp in 0..local_paths {
                let mut rng = path_stream(seed, base + lp);
                cur.copy_from_slice(x0.coords());
                let xs = &mut xc[lp * x_stride..(lp + 1) * x_stride];
                let ws = &mut wc[lp * w_stride..(lp + 1) * w_stride];
                let ps = &mut pc[lp * x_stride..(lp + 1) * x_stride];
                for k in 0..=steps {
                    // Rank the current state; ties go to the lowest index.
                    order.sort_unstable_by(|&a, &b| {
                        cur[b]
                            .partial_cmp(&cur[a])
                            .expect("finite state")
                            .then(a.cmp(&b))
                    });
                    for (j, &i) in order.iter().enumerate() {
                        ps[k * n + i] = j as u8;
                        ranked[j] = cur[i];
                    }
                    let (t, tr) = scan_contacts(&ranked);
                    ties += t;
                    triples += tr;
                    xs[k * n..(k + 1) * n].copy_from_slice(&cur);
                    if k == steps {
                        break;
                    }
                    for i in 0..n {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        let dwi = sqrt_dt * z;
                        ws[k * n + i] = dwi;
                        let (drift, vol) = match coeffs {
                            Coefficients::Exact => {
                                let j = ps[k * n + i] as usize;
                                (profile.delta[j], profile.sigma[j])
                            }
                            Coefficients::Softmin(m) => {
                                softmin_coeffs(profile, &ranked, cur[i], m, &mut weights)
                            }
                        };
                        cur[i] += drift * dt + vol * dwi;
                    }
                }
            }
            (ties, triples)
        })
        .collect();

    let mut diagnostics = BundleDiagnostics {
        observations: paths * (steps + 1),
        ..Default::default()
    };
    for (t, tr) in chunk_stats {
        diagnostics.tie_events += t;
        diagnostics.triple_proximity_events += tr;
    }

    Ok(PathBundle {
        grid: *grid,
        n,
        paths,
        seed,
        smoothing,
        x,
        dw,
        perm,
        lambda: None,
        diagnostics,
    })
}

/// Counts exact adjacent ties and near-triple contacts in one ranked state.
fn scan_contacts(ranked: &[f64]) -> (usize, usize) {
    let n = ranked.len();
    let mut tie = 0;
    let mut triple = 0;
    let mut prev_small = false;
    for j in 0..n.saturating_sub(1) {
        let gap = ranked[j] - ranked[j + 1];
        if gap == 0.0 {
            tie = 1;
        }
        let small = gap < TRIPLE_PROXIMITY * (1.0 + ranked[j].abs());
        if small && prev_small {
            triple = 1;
        }
        prev_small = small;
    }
    (tie, triple)
}

/// Softmin-blended drift and volatility for the particle at value `xi`.
/// The distance to its own rank is exactly zero, so the row never
/// underflows to an all-zero weight vector.
fn softmin_coeffs(
    profile: &CoefficientProfile,
    ranked: &[f64],
    xi: f64,
    m: f64,
    weights: &mut [f64],
) -> (f64, f64) {
    let n = ranked.len();
    let mut total = 0.0;
    for j in 0..n {
        let w = (-m * (xi - ranked[j]).abs()).exp();
        weights[j] = w;
        total += w;
    }
    let mut drift = 0.0;
    let mut vol = 0.0;
    for j in 0..n {
        let w = weights[j] / total;
        drift += w * profile.delta[j];
        vol += w * profile.sigma[j];
    }
    (drift, vol)
}
