//! Grasp analysis and reactive slip control.
//!
//! Internal forces live in the null space of the grasp matrix. When slip is
//! detected the controller adds a scaled, torque-feasible internal-force
//! profile on top of the baseline grip, which raises friction margins
//! without disturbing the object wrench.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod grasp_model;
pub mod nullspace;
pub mod qp;
pub mod slip_bench;
pub mod tactile_sim;

pub use controller::{
    cap_alpha, compute_torque_increment, AlphaPolicy, Controller, ControllerConfig, ControllerError, Mode, RscState, SlipCue,
    TorqueCommand,
};
pub use grasp_model::{
    build_contact_frame, build_grasp_matrix, build_hand_jacobian, cone_margin, object_wrench, Contact, ContactForceVector,
    FingerChain, GraspError, GraspModel,
};
pub use nullspace::{analyze_grasp, analyze_grasp_with, classify_grasp, nullspace_basis, GraspAnalysis, GraspClass, NullspaceBasis, NullspaceError};
pub use qp::{assemble_qp, solve_internal_qp, InternalForceProfile, ObjectiveWeights, QpError, QpOptions, QpProblem, QpStatus};
pub use slip_bench::{run_batch, run_trial, BenchError, ScenarioConfig, Trace, TrialMetrics};
pub use tactile_sim::{DetectorConfig, PzRFrame, PzESample, TactileError};
