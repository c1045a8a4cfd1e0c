use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Result<T, E = SpbeError> = std::result::Result<T, E>;

/// A single violated constraint found while validating a game description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ValidationIssue {
    /// A prior (stage 1) or kernel row (stage >= 2) that is not a probability vector.
    /// `row` is empty for priors and `[own_type, joint_action]` for kernels.
    NonStochasticRow {
        player: usize,
        stage: usize,
        row: Vec<usize>,
    },
    DimensionMismatch {
        field: String,
    },
    NonFiniteReward {
        player: usize,
        joint_type: usize,
        joint_action: usize,
    },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::NonStochasticRow { player, stage, row } if row.is_empty() => {
                write!(f, "prior of player {player} (stage {stage}) is not a probability vector")
            }
            ValidationIssue::NonStochasticRow { player, stage, row } => write!(
                f,
                "kernel row of player {player} into stage {stage} at (type {}, joint action {}) is not a probability vector",
                row[0], row[1]
            ),
            ValidationIssue::DimensionMismatch { field } => {
                write!(f, "dimension mismatch in `{field}`")
            }
            ValidationIssue::NonFiniteReward {
                player,
                joint_type,
                joint_action,
            } => write!(
                f,
                "reward of player {player} at (joint type {joint_type}, joint action {joint_action}) is not finite"
            ),
        }
    }
}

#[derive(Debug, Clone, Error)]
pub enum SpbeError {
    #[error("invalid game: {}", join_issues(.0))]
    Invalid(Vec<ValidationIssue>),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("history enumeration too large: {estimated} weighted branches exceed the cap {cap}")]
    EnumerationTooLarge { estimated: u128, cap: u128 },

    #[error("no continuation value available at belief key {0}")]
    MissingContinuation(String),

    #[error("no fixed point found at stage {stage}, belief {belief:?}; final residuals per seed {residuals:?}{}", cause_suffix(.cause))]
    NoFixedPointFound {
        stage: usize,
        belief: Vec<Vec<f64>>,
        residuals: Vec<f64>,
        cause: Option<String>,
    },

    #[error("stage rule prescription at stage {stage} is not an equilibrium of the stage game (residual {residual:e})")]
    RejectedPrescription { stage: usize, residual: f64 },

    #[error("missing public-history node {0:?}")]
    MissingNode(Vec<usize>),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for SpbeError {
    fn from(err: std::io::Error) -> Self {
        SpbeError::Io(err.to_string())
    }
}

fn join_issues(issues: &[ValidationIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

fn cause_suffix(cause: &Option<String>) -> String {
    match cause {
        Some(c) => format!(" (caused by: {c})"),
        None => String::new(),
    }
}
