//! Finite-difference solver for the obstacle problem on the ordered domain.
//!
//! The ordered state is rewritten in sum and gap coordinates, which turns
//! the coincidence faces into coordinate planes: the face condition that the
//! two colliding ranks share their normal derivative becomes a reflection
//! condition on the gap axis, implemented exactly by ghost nodes. One to
//! three particles are supported; the three-particle wedge is experimental
//! and validated against Monte Carlo only. Outer truncation boundaries use
//! linear extrapolation, and the backward theta scheme treats the obstacle
//! either by per-step projection or by a penalty branch inside the sweeps.

mod grid;
mod operator;
mod solve;

pub use grid::{ranked_to_xi, xi_to_ranked, Axis, SimplexGrid};
pub use operator::{assemble_operator, DiscreteOperator};
pub use solve::{
    boundary_residual, solve_obstacle, BoundaryReport, GridSolution, PdeMode, PdeOptions,
};
