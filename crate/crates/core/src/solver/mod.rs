//! Robust backward induction, threshold policies and their oracles.
//!
//! Slots are 0-based: a horizon of `h` slots solves slots `0..h` with a zero
//! value after the last one.

mod backup;
mod costs;
mod finite;
mod infinite;
mod policy;
mod values;

pub use costs::{FullCosts, SharedCosts, StageCosts};
pub use finite::{
    action_value, backward_induction, backward_induction_with, compute_thresholds, flat_backward_induction, g_term, h_term,
    Decomposition, Solution,
};
pub use infinite::{
    default_cutoff, estimate_policy_value, evaluate_policy, flat_value_iteration, infinite_horizon_solve,
    infinite_horizon_solve_with, mean_value, monte_carlo_search, Estimate, InfiniteSolution, MonteCarloResult,
    RolloutRows, RowChoice,
};
pub use policy::{apply_threshold_rule, OrthantThreshold, ThresholdPolicy};
pub use values::{DenseValues, ValueTable};

pub(crate) use infinite::{cumulate, sample_cumulative};
