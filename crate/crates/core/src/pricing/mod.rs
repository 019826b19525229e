//! American-option pricing on a rank-based stock market.
//!
//! A market assigns drift and volatility by rank to the stock prices and a
//! short rate to the bond. Pricing maps the market to log coordinates, where
//! the claim becomes terminal and obstacle data for the reflected backward
//! solver; the solution's value process is the claim's price process, its
//! ranked control is the dollar-volatility hedge, and its reflection term is
//! the consumption of the superhedge. A recombining-tree oracle covers the
//! single-stock case through an independent code path.

mod binomial;
mod market;

pub use binomial::{binomial_price, ExerciseStyle, OptionSide};
pub use market::{
    exercise_boundary_samples, load_market_config, price_american, validate_market, EarlyExercise,
    MarketConfig, MarketSpec, PriceClaim, PricingResult,
};
