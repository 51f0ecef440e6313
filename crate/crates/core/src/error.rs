use thiserror::Error;

use crate::belief::BeliefError;
use crate::engine::EngineError;
use crate::grid::GridError;
use crate::mcts::MctsError;
use crate::rollout::RolloutError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error(transparent)]
    Mcts(#[from] MctsError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown {kind} {name:?}; expected one of {known}")]
    Unknown { kind: &'static str, name: String, known: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error comes from malformed input rather than a failed run.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Grid(_) | Error::Config(_) | Error::Unknown { .. } | Error::Json(_))
    }
}
