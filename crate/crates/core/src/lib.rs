//! Structured perfect Bayesian equilibria of finite-horizon dynamic games
//! with independent private Markov types and public actions.
//!
//! The solver computes, for every stage and reachable common belief, a
//! profile of type-to-action prescriptions solving the stage fixed-point
//! equation (backward pass), then builds strategies and beliefs over the tree
//! of public histories (forward pass). [`verify`] certifies the result
//! without reusing the solver's internals.

pub mod belief;
pub mod cli;
pub mod error;
pub mod game;
pub mod io;
pub mod pubgoods;
pub mod solver;
pub mod testing;
pub mod verify;

pub use belief::{update_belief, update_marginal, update_vector, BeliefVector, GammaProfile, PartialFunction};
pub use error::{Result, SpbeError, ValidationIssue};
pub use game::{
    enumerate_outcome_distribution, expected_total_reward, validate_game, Distribution, GameSpec, GeneralStrategy,
    JointOutcome, ValidatedGame,
};
pub use solver::{
    forward_construct, BeliefSystem, Equilibrium, EquilibriumGenerator, FixedPointConfig, StageSolution,
    StrategyProfile,
};
pub use verify::{check_sequential_rationality, VerificationReport};
