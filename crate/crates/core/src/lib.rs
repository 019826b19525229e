//! Numerical engine for diffusions whose drift and volatility are assigned by
//! rank: particle `i` receives coefficient `j` exactly while it occupies rank
//! `j` in the descending order statistics of the state vector.
//!
//! The crate is organised around one forward model and three ways to compute
//! conditional value functions on top of it:
//!
//! * [`model`] — coefficient profiles, rank views, descriptor registries for
//!   generators / terminal data / obstacles, and hypothesis validation.
//! * [`sde`] — Euler path simulation with per-path deterministic noise
//!   streams, local-time recovery from ranked residuals, softmin-smoothed
//!   coefficient variants, and ranked-driver diagnostics.
//! * [`bsde`] — least-squares Monte Carlo backward solvers for plain,
//!   reflected (obstacle) and penalized equations in ranked coordinates.
//! * [`pde`] — finite-difference obstacle solvers on the ordered wedge in
//!   sum/gap coordinates with exact face reflection at coordinate ties.
//! * [`pricing`] — American claim pricing on ranked assets, including the
//!   log-coordinate reduction and an independent binomial oracle.
//! * [`harness`] — experiment configs, Monte-Carlo/PDE cross-validation,
//!   convergence ladders, and reproducible scenario artifacts.

pub mod bsde;
pub mod error;
pub mod harness;
pub mod model;
pub mod pde;
pub mod pricing;
pub mod sde;
pub mod util;

pub use error::{Error, Result};
