//! Slip-generation bench: a grasped object on a 1-DoF slide under a
//! traction profile, closed through the simulated tactile stack and the
//! reactive controller.

pub mod batch;
pub mod dynamics;
pub mod scenario;
pub mod trial;

use thiserror::Error;

use crate::controller::ControllerError;
use crate::tactile_sim::TactileError;

pub use batch::{run_batch, run_labelled, sample_scenarios, BatchRow, BatchSummary, Stat};
pub use dynamics::{map_torques_to_contact_forces, step_dynamics, DynamicsParams, SimState};
pub use scenario::{ScenarioConfig, TrialMode};
pub use trial::{run_trial, Trace, TrialMetrics};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchError {
    #[error("invalid scenario: {0}")]
    ScenarioInvalid(String),
    #[error("non-finite simulation state: {0}")]
    NonFiniteState(String),
    #[error("command does not decompose into baseline plus internal step: {0}")]
    UnknownDecomposition(String),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Tactile(#[from] TactileError),
    #[error("i/o: {0}")]
    Io(String),
    #[error("empty batch")]
    EmptyBatch,
}
