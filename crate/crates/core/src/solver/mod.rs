//! Backward fixed-point recursion and forward construction.

mod forward;
mod generator;
mod stage;
mod support;

pub use forward::{
    encode_history, forward_construct, BeliefSystem, Equilibrium, NodeStatus, PublicTree, StrategyProfile,
};
pub use generator::{EquilibriumGenerator, StageRule};
pub use stage::{
    action_values, best_response_row, enumerate_stage_fixed_points, evaluate_profile, pure_profile,
    pure_profile_count, solve_stage_fixed_point, stage_objective, ActionValues, Continuation,
    FixedPointConfig, SeedPlan, SelectionRule, StageSolution, ZeroContinuation, MAX_PURE_SEEDS,
    MAX_SUPPORT_PATTERNS, RANDOM_SEED_COUNT,
};
pub use support::{support_enumeration, support_pattern_count};
