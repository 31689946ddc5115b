use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::data::{ItemId, UserId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DataError {
    #[error("duplicate rating for ({user}, {item})")]
    DuplicateEntry { user: UserId, item: ItemId },
    #[error("no rating for ({user}, {item})")]
    NotFound { user: UserId, item: ItemId },
    #[error("user {0} has no group label")]
    UnknownUser(UserId),
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("user {user} has {count} rating(s); at least 2 are needed to split")]
    DegenerateUser { user: UserId, count: usize },
    #[error("invalid split configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

impl IngestError {
    pub(crate) fn parse(line: usize, reason: impl Into<String>) -> Self {
        IngestError::Parse {
            line,
            reason: reason.into(),
        }
    }

    /// 1-based line number for parse errors.
    pub fn line(&self) -> Option<usize> {
        match self {
            IngestError::Parse { line, .. } => Some(*line),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot train on an empty rating set")]
    EmptyTrainingSet,
    #[error("cannot evaluate on an empty test set")]
    EmptyTestSet,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperParams(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("unknown strategy name {0:?}")]
    UnknownStrategy(String),
    #[error("strategy {0} needs a trained model")]
    MissingModel(&'static str),
    #[error("greedy extend needs a non-empty validation set")]
    EmptyValidationSet,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("group {0} has no test ratings")]
    EmptyGroup(&'static str),
    #[error("t-test needs at least 2 samples per side, got {left} and {right}")]
    InsufficientSamples { left: usize, right: usize },
    #[error("trace is empty")]
    EmptyTrace,
    #[error("trace csv line {line}: {reason}")]
    TraceFormat { line: usize, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("every candidate pool is empty")]
    Exhausted,
    #[error("invalid simulation configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}
