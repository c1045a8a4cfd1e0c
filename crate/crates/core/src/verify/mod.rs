//! Independent certification of constructed equilibria.

mod deviation;
mod lemmas;
mod simulate;
mod structure;

pub use deviation::{
    best_response_values, check_sequential_rationality, equilibrium_values, exhaustive_deviation_value,
    DeviationMdp, GapEntry, MdpAction, VerificationReport, BELIEF_CONSISTENCY_TOLERANCE,
    DEFAULT_VERIFY_TOLERANCE,
};
pub use lemmas::{
    continuation_independence_error, one_step_deviation_excess, one_step_value, value_consistency_error,
    NodeOverride,
};
pub use simulate::{simulate, SimulationResult, CHUNK_EPISODES};
pub use structure::{
    brute_force_posteriors, check_belief_consistency, conditional_independence_error, project_to_s,
    CombinedStrategy, ConsistencyReport, TypeMarkovStrategy,
};
