//! Shared vocabulary for rank-based problems: coefficient profiles, rank
//! views and the named/ranked transforms, points of the ordered domain, and
//! the descriptor registry for generators, terminal data and obstacles.

mod profile;
mod rank;
mod registry;
mod spec;

pub use profile::{check_concavity, CoefficientProfile, RateCurve};
pub use rank::{
    named_to_ranked_z, rank_state, ranked_to_named_z, RankView, SimplexPoint,
};
pub use registry::{GeneratorKind, ObstacleKind, TerminalKind};
pub use spec::{
    load_problem_config, validate_spec, validate_spec_with_horizon, HypothesisCheck,
    ProblemConfig, ProblemSpec, ValidationReport,
};
