//! Backward solvers on simulated path bundles.
//!
//! The value process is rebuilt backward in time by least-squares value
//! iteration: at each step the conditional expectation of the next value is
//! fitted on a polynomial basis of the ranked state, the gradient proxy comes
//! from regressing noise-weighted residuals, and the generator is absorbed by
//! an implicit update that is exact for generators affine in `y`. An obstacle
//! enters either by pathwise projection or by a penalty term with explicit
//! intensity.

mod basis;
mod regression;
mod solver;

pub use basis::BasisSpec;
pub use regression::RegressionPlan;
pub use solver::{
    estimate_u, solve_bsde, solve_penalized, solve_reflected, BsdeSolution, EstimateConfig,
    SolverOptions, StepStat,
};
