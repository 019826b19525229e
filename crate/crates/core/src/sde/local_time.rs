use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::CoefficientProfile;
use crate::sde::bundle::PathBundle;
use crate::util::PATH_CHUNK;

/// Recovers cumulative collision local times for every adjacent rank pair
/// and stores them on the bundle.
///
/// Over one step the ranked increment splits as
/// `dX_(j) = delta_j dt + sigma_j dbeta_j + (dL[j] - dL[j-1]) / 2`,
/// where `dL[j]` is the local time accrued by the contact of ranks `j` and
/// `j+1` and the outer pairs vanish. The residuals
/// `R_j = dX_(j) - delta_j dt - sigma_j dbeta_j` therefore determine the pair
/// increments by the triangular sweep `dL[j] = 2 R_j + dL[j-1]`. Negative
/// increments are discretization noise; they are clipped to zero on
/// accumulation and the clipped magnitude is totalled in
/// `diagnostics.clipped_mass` so callers can judge the noise floor.
pub fn estimate_local_times(bundle: &mut PathBundle, profile: &CoefficientProfile) -> Result<()> {
    bundle.check_dims(profile.n)?;
    if bundle.smoothing.is_some() {
        return Err(Error::validation(
            "local-time recovery needs rank-exact coefficients; smoothed bundles fold \
             blending error into the residuals",
        ));
    }
    let n = bundle.n;
    let steps = bundle.grid.steps();
    let dt = bundle.grid.dt();
    let pairs = n - 1;
    let lam_stride = (steps + 1) * pairs;
    let mut lambda = vec![0.0f64; bundle.paths * lam_stride];
    if pairs == 0 {
        bundle.lambda = Some(lambda);
        bundle.diagnostics.clipped_mass = 0.0;
        return Ok(());
    }

    let b: &PathBundle = bundle;
    let chunk_clip: Vec<f64> = lambda
        .par_chunks_mut(PATH_CHUNK * lam_stride)
        .enumerate()
        .map(|(chunk_id, lc)| {
            let base = chunk_id * PATH_CHUNK;
            let local_paths = lc.len() / lam_stride;
            let mut clip = 0.0f64;
            let mut prev = vec![0.0f64; n];
            let mut next = vec![0.0f64; n];
            let mut dbeta = vec![0.0f64; n];
            for lp in 0..local_paths {
                let path = base + lp;
                let ls = &mut lc[lp * lam_stride..(lp + 1) * lam_stride];
                b.ranked_state_into(path, 0, &mut prev);
                for k in 0..steps {
                    b.ranked_state_into(path, k + 1, &mut next);
                    b.ranked_increments_into(path, k, &mut dbeta);
                    // Raw recursion keeps the unclipped value so one noisy
                    // pair does not bias every pair below it.
                    let mut carry = 0.0f64;
                    for j in 0..pairs {
                        let resid =
                            next[j] - prev[j] - profile.delta[j] * dt - profile.sigma[j] * dbeta[j];
                        let d = 2.0 * resid + carry;
                        let inc = if d < 0.0 {
                            clip -= d;
                            0.0
                        } else {
                            d
                        };
                        ls[(k + 1) * pairs + j] = ls[k * pairs + j] + inc;
                        carry = d;
                    }
                    std::mem::swap(&mut prev, &mut next);
                }
            }
            clip
        })
        .collect();

    bundle.lambda = Some(lambda);
    bundle.diagnostics.clipped_mass = chunk_clip.iter().sum();
    Ok(())
}
