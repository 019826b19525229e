//! Experiment plumbing: one config document drives simulation, backward
//! solves, grid solves, representation cross-checks, refinement ladders and
//! reproducible artifact directories.
//!
//! Everything downstream of a config is a pure function of its contents;
//! seeds are mandatory and worker counts never change results, so artifact
//! digests are stable across machines and thread pools.

mod config;
mod convergence;
mod cross;
mod scenario;

pub use config::{
    load_experiment_config, ExperimentConfig, GapSpec, GridSpec, Numerics, Probe, Resolved,
};
pub use convergence::{convergence_table, ConvergenceAxis, ConvergenceRow, ConvergenceTable};
pub use cross::{cross_validate, solve_config_pde, CrossReport, ExcludedProbe, ProbeOutcome};
pub use scenario::{run_scenario, sha256_hex, Manifest, ManifestEntry};
