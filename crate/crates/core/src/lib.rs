//! Data-minimization simulator for matrix-factorization recommenders.
//!
//! Ratings are acquired from simulated users by an active-learning
//! strategy, a biased MF model is retrained on what has been acquired, and
//! test error is tracked separately for a protected and an unprotected user
//! group.

pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod ingest;
pub mod mf;
pub(crate) mod rng;
pub mod simulation;
pub mod strategies;
pub mod synth;

pub use data::{CandidatePool, Group, GroupMap, Interaction, ItemId, RatingSet, UserId};
pub use error::{DataError, EvalError, ExperimentError, IngestError, ModelError, SimulationError, StrategyError};
pub use mf::{MfHyperParams, MfModel};
pub use simulation::{SimulationConfig, SimulationTrace, TracePoint, World};
pub use strategies::StrategyKind;
