//! Reactive slip control state machine.
//!
//! On a slip cue the controller scales the current internal-force profile
//! `f0*` by a gain `α`, maps it to a joint-torque increment `α J^T f0*` and
//! adds it to the upstream baseline torque. `α` is capped so the command
//! stays inside the actuator box. Profiles are recomputed whenever a new
//! contact estimate arrives; the last good profile is reused otherwise.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grasp_model::{torque_limits, ContactForceVector, FingerChain, GraspModel};
use crate::nullspace::{analyze_grasp_with, GraspClass, NullspaceError, DEFAULT_ACTUATION_TOL, DEFAULT_RANK_TOL};
use crate::qp::{assemble_qp_weighted, solve_internal_qp, InternalForceProfile, ObjectiveWeights, QpError, QpOptions, QpStatus};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("contact model is {age_s:.4} s old (bound {bound_s:.4} s)")]
    StaleModel { age_s: f64, bound_s: f64 },
    #[error("clock went backwards: {now} < {last}")]
    NonMonotoneClock { now: f64, last: f64 },
    #[error("no internal-force profile available")]
    NoProfile,
    #[error(transparent)]
    Nullspace(#[from] NullspaceError),
    #[error(transparent)]
    Qp(#[from] QpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Idle,
    Slipping,
    Reinforcing,
    Stabilized,
    NotApplicable,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Idle => "idle",
            Mode::Slipping => "slipping",
            Mode::Reinforcing => "reinforcing",
            Mode::Stabilized => "stabilized",
            Mode::NotApplicable => "not_applicable",
        }
    }
}

/// How the gain is applied once slip is confirmed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlphaPolicy {
    /// Track cues but never command; grasp forces follow a script.
    Scripted,
    /// One step of `alpha` per slip event.
    SingleStep { alpha: f64 },
    /// Ramp from the current gain by `alpha` over `ramp_s` seconds.
    Progressive { alpha: f64, ramp_s: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub policy: AlphaPolicy,
    /// Model update + QP time between a cue and its command.
    pub processing_latency_s: f64,
    pub hold_window_s: f64,
    pub refractory_s: f64,
    pub stale_model_s: f64,
    pub rank_tol: f64,
    /// Feasibility-gate cutoff on `|J^T x| / sigma_max(J)` for internal forces.
    pub actuation_tol: f64,
    pub weights: ObjectiveWeights,
    pub qp: QpOptions,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            policy: AlphaPolicy::SingleStep { alpha: 10.0 },
            processing_latency_s: 0.005,
            hold_window_s: 0.050,
            refractory_s: 0.100,
            stale_model_s: 0.050,
            rank_tol: DEFAULT_RANK_TOL,
            actuation_tol: DEFAULT_ACTUATION_TOL,
            weights: ObjectiveWeights::default(),
            qp: QpOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlipCue {
    /// `true` for slip onset, `false` for slip offset.
    pub detected: bool,
    pub confidence: f64,
    pub timestamp: f64,
    pub finger_ids: Vec<usize>,
}

/// A joint-torque command together with its decomposition
/// `tau_cmd = tau_base + alpha J^T f0*`.
#[derive(Debug, Clone, PartialEq)]
pub struct TorqueCommand {
    pub timestamp: f64,
    pub tau_cmd: DVector<f64>,
    pub tau_base: DVector<f64>,
    pub alpha: f64,
    pub f0_star: ContactForceVector,
    /// Model-level wrench of the increment, `|G α f0*|`.
    pub wrench_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RscState {
    pub mode: Mode,
    pub tau_base: DVector<f64>,
    pub current_profile: Option<InternalForceProfile>,
    pub alpha: f64,
    pub last_slip_cue_time: Option<f64>,
    pub last_command_time: Option<f64>,
    pub last_class: Option<GraspClass>,
    pub commands_emitted: usize,
    model: Option<GraspModel>,
    model_time: f64,
    clock: f64,
    slip_active: bool,
    offset_since: Option<f64>,
    fire_at: Option<f64>,
    event_alpha: f64,
    ramp_start: Option<f64>,
}

impl RscState {
    pub fn new(tau_base: DVector<f64>) -> Self {
        Self {
            mode: Mode::Idle,
            tau_base,
            current_profile: None,
            alpha: 0.0,
            last_slip_cue_time: None,
            last_command_time: None,
            last_class: None,
            commands_emitted: 0,
            model: None,
            model_time: f64::NEG_INFINITY,
            clock: f64::NEG_INFINITY,
            slip_active: false,
            offset_since: None,
            fire_at: None,
            event_alpha: 0.0,
            ramp_start: None,
        }
    }

    pub fn model(&self) -> Option<&GraspModel> {
        self.model.as_ref()
    }
}

/// `α J^T f0*`.
pub fn compute_torque_increment(
    profile: &InternalForceProfile,
    alpha: f64,
    j: &nalgebra::DMatrix<f64>,
) -> Result<DVector<f64>, ControllerError> {
    if j.nrows() != profile.f0_star.0.len() {
        return Err(ControllerError::DimensionMismatch { expected: j.nrows(), found: profile.f0_star.0.len() });
    }
    Ok(j.tr_mul(&profile.f0_star.0) * alpha)
}

/// Largest `α <= alpha_request` keeping `tau_base + α d` inside the box,
/// where `d = J^T f0*`.
pub fn cap_alpha(
    alpha_request: f64,
    profile: &InternalForceProfile,
    j: &nalgebra::DMatrix<f64>,
    tau_base: &DVector<f64>,
    tau_min: &DVector<f64>,
    tau_max: &DVector<f64>,
) -> Result<f64, ControllerError> {
    let d = compute_torque_increment(profile, 1.0, j)?;
    Ok(cap_alpha_for_direction(alpha_request, &d, tau_base, tau_min, tau_max))
}

pub fn cap_alpha_for_direction(
    alpha_request: f64,
    d: &DVector<f64>,
    tau_base: &DVector<f64>,
    tau_min: &DVector<f64>,
    tau_max: &DVector<f64>,
) -> f64 {
    let mut alpha_max = f64::INFINITY;
    for i in 0..d.len() {
        let ratio = if d[i] > 0.0 {
            (tau_max[i] - tau_base[i]) / d[i]
        } else if d[i] < 0.0 {
            (tau_min[i] - tau_base[i]) / d[i]
        } else {
            continue;
        };
        alpha_max = alpha_max.min(ratio.max(0.0));
    }
    alpha_request.min(alpha_max).max(0.0)
}

pub struct Controller {
    pub config: ControllerConfig,
    pub chains: Vec<FingerChain>,
    pub tau_min: DVector<f64>,
    pub tau_max: DVector<f64>,
}

impl Controller {
    pub fn new(config: ControllerConfig, chains: Vec<FingerChain>) -> Self {
        let (tau_min, tau_max) = torque_limits(&chains);
        Self { config, chains, tau_min, tau_max }
    }

    fn refresh_model(&self, state: &mut RscState, model: &GraspModel, clock: f64) -> Result<(), ControllerError> {
        let analysis = analyze_grasp_with(&model.g, &model.j, self.config.rank_tol, self.config.actuation_tol)?;
        state.last_class = Some(analysis.class);
        state.model = Some(model.clone());
        state.model_time = clock;
        if !analysis.class.rsc_applicable {
            state.mode = Mode::NotApplicable;
            state.current_profile = None;
            state.fire_at = None;
            state.ramp_start = None;
            return Ok(());
        }
        if state.mode == Mode::NotApplicable {
            state.mode = Mode::Idle;
            state.alpha = 0.0;
        }
        let problem = assemble_qp_weighted(model, &analysis.internal, &self.chains, self.config.weights)?;
        let mut opts = self.config.qp.clone();
        if opts.warm_start.is_none() {
            opts.warm_start = state.current_profile.as_ref().map(|p| p.lambda.clone());
        }
        let profile = solve_internal_qp(&problem, &opts)?;
        if matches!(profile.status, QpStatus::Optimal | QpStatus::MaxIterations) {
            state.current_profile = Some(profile);
        }
        Ok(())
    }

    fn command(&self, state: &mut RscState, alpha_request: f64, clock: f64) -> Result<TorqueCommand, ControllerError> {
        let model = state.model.as_ref().ok_or(ControllerError::StaleModel {
            age_s: f64::INFINITY,
            bound_s: self.config.stale_model_s,
        })?;
        let age = clock - state.model_time;
        if age > self.config.stale_model_s {
            return Err(ControllerError::StaleModel { age_s: age, bound_s: self.config.stale_model_s });
        }
        let profile = state.current_profile.as_ref().ok_or(ControllerError::NoProfile)?;
        if state.tau_base.len() != model.num_joints() {
            return Err(ControllerError::DimensionMismatch { expected: model.num_joints(), found: state.tau_base.len() });
        }
        let alpha = cap_alpha(alpha_request, profile, &model.j, &state.tau_base, &self.tau_min, &self.tau_max)?;
        let increment = compute_torque_increment(profile, alpha, &model.j)?;
        let mut tau_cmd = &state.tau_base + increment;
        // Absorb rounding at the active limit.
        for i in 0..tau_cmd.len() {
            tau_cmd[i] = tau_cmd[i].clamp(self.tau_min[i], self.tau_max[i]);
        }
        let delta_f = &profile.f0_star.0 * alpha;
        let wrench_residual = (&model.g * &delta_f).norm();
        state.alpha = alpha;
        state.last_command_time = Some(clock);
        state.commands_emitted += 1;
        Ok(TorqueCommand {
            timestamp: clock,
            tau_cmd,
            tau_base: state.tau_base.clone(),
            alpha,
            f0_star: profile.f0_star.clone(),
            wrench_residual,
        })
    }

    /// Advances the state machine to `clock`.
    pub fn step(
        &self,
        mut state: RscState,
        cue: Option<&SlipCue>,
        contact_update: Option<&GraspModel>,
        clock: f64,
    ) -> Result<(RscState, Option<TorqueCommand>), ControllerError> {
        if clock < state.clock {
            return Err(ControllerError::NonMonotoneClock { now: clock, last: state.clock });
        }
        state.clock = clock;
        if let Some(model) = contact_update {
            self.refresh_model(&mut state, model, clock)?;
        }
        if state.mode == Mode::NotApplicable {
            return Ok((state, None));
        }

        if let Some(cue) = cue {
            if cue.detected {
                state.slip_active = true;
                state.offset_since = None;
                state.last_slip_cue_time = Some(cue.timestamp);
                let refractory_ok = state
                    .last_command_time
                    .is_none_or(|t| clock - t >= self.config.refractory_s);
                if matches!(state.mode, Mode::Idle | Mode::Stabilized) && refractory_ok {
                    state.mode = Mode::Slipping;
                    state.fire_at = Some(clock + self.config.processing_latency_s);
                }
            } else {
                state.slip_active = false;
                state.offset_since = Some(clock);
            }
        }

        let mut out = None;
        if state.mode == Mode::Slipping && state.fire_at.is_some_and(|t| clock >= t) {
            state.fire_at = None;
            state.mode = Mode::Reinforcing;
            state.event_alpha = state.alpha;
            match self.config.policy {
                AlphaPolicy::Scripted => {}
                AlphaPolicy::SingleStep { alpha } => {
                    let target = state.event_alpha + alpha;
                    out = Some(self.command(&mut state, target, clock)?);
                }
                AlphaPolicy::Progressive { .. } => {
                    state.ramp_start = Some(clock);
                }
            }
        }

        if let (AlphaPolicy::Progressive { alpha, ramp_s }, Some(start)) = (self.config.policy, state.ramp_start) {
            let frac = if ramp_s > 0.0 { ((clock - start) / ramp_s).min(1.0) } else { 1.0 };
            let target = state.event_alpha + alpha * frac;
            out = Some(self.command(&mut state, target, clock)?);
            if frac >= 1.0 {
                state.ramp_start = None;
            }
        }

        if state.mode == Mode::Reinforcing
            && !state.slip_active
            && state.ramp_start.is_none()
            && state.offset_since.is_some_and(|t| clock - t >= self.config.hold_window_s)
        {
            state.mode = Mode::Stabilized;
        }
        Ok((state, out))
    }
}
