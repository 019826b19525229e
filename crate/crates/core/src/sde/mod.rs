//! Forward simulation of rank-assigned diffusions.
//!
//! Paths evolve by explicit Euler steps: at every step each particle receives
//! the drift and volatility of its current rank (or a softmin blend of all
//! ranks in the smoothed variant). Noise comes from counter-based per-path
//! streams, so a bundle is a pure function of `(seed, path index)` and is
//! bit-identical for any rayon worker count.

mod bundle;
mod diagnostics;
mod grid;
mod local_time;
mod rng;
mod simulate;

pub use bundle::{BundleDiagnostics, PathBundle};
pub use diagnostics::{
    max_step_gap, mean_sup_sq_diff, mean_sup_sq_norm, ranked_brownian_diagnostics, QvReport,
};
pub use grid::TimeGrid;
pub use local_time::estimate_local_times;
pub use rng::path_stream;
pub use simulate::{simulate, simulate_with_options, smoothed_simulate};
