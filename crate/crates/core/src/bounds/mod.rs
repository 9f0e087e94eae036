//! Asymptotic rate formulas, curve tables and the change-of-measure check.

mod change_of_measure;
mod curves;
mod rates;

pub use change_of_measure::{
    strategy_corpus, verify_change_of_measure, AdaptiveStrategy, BinarySplitting, HashedDesign,
    IndividualCycle, MeasureCheck, MeasureNoise, MeasureReport, PairFollowUp,
};
pub use curves::{curves_csv_string, emit_curves, format_sig12, theta_grid, write_curves_csv};
pub use rates::{
    ach_rate_practical, ach_rate_refined, ach_rate_simple, capacity_converse_rate,
    converse_rate_symmetric, noiseless_rate, rate, refined_infimum, reverse_z_converse_rate,
    z_achievability_rate, RatePoint, RateSource, RefinedObjective,
};
