//! Trial scenario files.
//!
//! Scenarios are TOML documents whose keys carry their units. Parameters can
//! be overridden by dotted path (`friction.mu_static`,
//! `traction.knots_ms_N.2.1`) for sweeps and randomized batches.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::controller::{AlphaPolicy, ControllerConfig};
use crate::grasp_model::{Contact, FingerChain, GraspModel};
use crate::tactile_sim::{DetectorConfig, PzeConfig, PzrConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialMode {
    /// Grip force follows `grasp.scripted`; the controller only observes.
    Scripted,
    /// The controller commands reinforcement steps.
    ClosedLoop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Scripted,
    SingleStep,
    Progressive,
}

fn default_decimation() -> usize {
    10
}

fn default_dt_ms() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub mode: TrialMode,
    pub seed: u64,
    #[serde(default = "default_dt_ms")]
    pub dt_ms: f64,
    pub duration_ms: f64,
    #[serde(default = "default_decimation")]
    pub trace_decimation: usize,
    pub object: ObjectConfig,
    pub friction: FrictionConfig,
    pub fingers: Vec<FingerConfig>,
    pub contacts: Vec<ContactConfig>,
    pub traction: TractionConfig,
    pub grasp: GraspConfig,
    pub controller: ControllerSection,
    #[serde(default)]
    pub detector: DetectorSection,
    #[serde(default)]
    pub tactile: TactileSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<BatchSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct ObjectConfig {
    pub mass_kg: f64,
    pub slide_limit_mm: f64,
    #[serde(default)]
    pub damping_Ns_per_m: f64,
    #[serde(default)]
    pub frame_position_m: [f64; 3],
    #[serde(default)]
    pub frame_rpy_rad: [f64; 3],
}

fn default_kinetic_ratio() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrictionConfig {
    pub mu_static: f64,
    #[serde(default = "default_kinetic_ratio")]
    pub kinetic_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct FingerConfig {
    pub id: usize,
    pub base_position_m: [f64; 3],
    #[serde(default)]
    pub base_rpy_rad: [f64; 3],
    pub link_lengths_m: Vec<f64>,
    pub joint_axes: Vec<[f64; 3]>,
    pub joint_angles_rad: Vec<f64>,
    pub tau_min_Nm: Vec<f64>,
    pub tau_max_Nm: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactConfig {
    pub finger: usize,
    pub phalanx: usize,
    pub position_m: [f64; 3],
    pub normal: [f64; 3],
    /// Offset of the pad center from the contact, in the contact tangent axes.
    #[serde(default)]
    pub pad_offset_mm: [f64; 2],
}

/// Piecewise-linear profile given either as explicit knots or as a
/// hold–ramp–hold step.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct ProfileConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knots_ms_N: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_N: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_N: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramp_ms: Option<f64>,
}

impl ProfileConfig {
    /// Knots as `(t_s, value_N)`.
    pub fn knots(&self, what: &str) -> Result<Vec<(f64, f64)>, BenchError> {
        let invalid = |m: String| BenchError::ScenarioInvalid(format!("{what}: {m}"));
        let knots: Vec<(f64, f64)> = match (&self.knots_ms_N, self.initial_N, self.final_N) {
            (Some(k), None, None) => k.iter().map(|[t, f]| (t * 1e-3, *f)).collect(),
            (None, Some(a), Some(b)) => {
                let start = self.start_ms.unwrap_or(0.0) * 1e-3;
                let ramp = self.ramp_ms.unwrap_or(0.0) * 1e-3;
                if start < 0.0 || ramp < 0.0 {
                    return Err(invalid("start_ms and ramp_ms must be non-negative".into()));
                }
                vec![(0.0, a), (start, a), (start + ramp, b)]
            }
            _ => return Err(invalid("give either knots_ms_N or initial_N and final_N".into())),
        };
        if knots.is_empty() {
            return Err(invalid("no knots".into()));
        }
        if knots.windows(2).any(|w| !(w[0].0 <= w[1].0)) {
            return Err(invalid("knots must be sorted by time".into()));
        }
        if knots.iter().any(|&(t, f)| !(f >= 0.0) || !t.is_finite()) {
            return Err(invalid("values must be finite and non-negative".into()));
        }
        Ok(knots)
    }

    /// Time at which the value first starts to rise, seconds.
    pub fn first_rise(&self) -> Option<f64> {
        let k = self.knots("profile").ok()?;
        k.windows(2).find(|w| w[1].1 > w[0].1).map(|w| w[0].0)
    }

    /// Number of distinct force increases starting before `until_s`; a run
    /// of consecutive rising segments counts once.
    pub fn rising_steps(&self, until_s: f64) -> usize {
        let Ok(k) = self.knots("profile") else { return 0 };
        let mut count = 0;
        let mut rising = false;
        for w in k.windows(2) {
            let up = w[1].1 > w[0].1;
            if up && !rising && w[0].0 < until_s {
                count += 1;
            }
            rising = up;
        }
        count
    }
}

/// Linear interpolation in `(t, value)` knots, held constant outside.
pub fn interpolate(knots: &[(f64, f64)], t: f64) -> f64 {
    if t <= knots[0].0 {
        return knots[0].1;
    }
    for w in knots.windows(2) {
        let ((t0, f0), (t1, f1)) = (w[0], w[1]);
        if t <= t1 {
            return if t1 > t0 { f0 + (f1 - f0) * (t - t0) / (t1 - t0) } else { f1 };
        }
    }
    knots[knots.len() - 1].1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct TractionConfig {
    /// Pull direction on the object, base frame.
    pub direction: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knots_ms_N: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_N: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_N: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramp_ms: Option<f64>,
}

impl TractionConfig {
    pub fn profile(&self) -> ProfileConfig {
        ProfileConfig {
            knots_ms_N: self.knots_ms_N.clone(),
            initial_N: self.initial_N,
            final_N: self.final_N,
            start_ms: self.start_ms,
            ramp_ms: self.ramp_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct GraspConfig {
    /// Mean normal force of the baseline grasp.
    pub baseline_mean_normal_N: f64,
    /// Mean-normal-force schedule used in scripted mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scripted: Option<ProfileConfig>,
}

fn d_alpha() -> f64 {
    0.0
}
fn d_ramp() -> f64 {
    100.0
}
fn d_proc() -> f64 {
    5.0
}
fn d_hold() -> f64 {
    50.0
}
fn d_refr() -> f64 {
    100.0
}
fn d_stale() -> f64 {
    50.0
}
fn d_actuation() -> f64 {
    ESTIMATED_ACTUATION_TOL
}

/// Actuation cutoff for grasp models built from tactile estimates; see
/// [`crate::nullspace::analyze_grasp_with`].
pub const ESTIMATED_ACTUATION_TOL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub policy: PolicyKind,
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    #[serde(default = "d_ramp")]
    pub ramp_ms: f64,
    #[serde(default = "d_proc")]
    pub processing_latency_ms: f64,
    #[serde(default = "d_hold")]
    pub hold_window_ms: f64,
    #[serde(default = "d_refr")]
    pub refractory_ms: f64,
    #[serde(default = "d_stale")]
    pub stale_model_ms: f64,
    /// Internal forces needing less than this fraction of the hand's
    /// largest torque gain count as unactuable.
    #[serde(default = "d_actuation")]
    pub actuation_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[allow(non_snake_case)]
pub struct DetectorSection {
    pub window_samples: usize,
    pub hop_samples: usize,
    pub band_Hz: [f64; 2],
    pub extra_latency_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub onset_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset_threshold: Option<f64>,
    pub calibration_s: f64,
    pub calibration_seed: u64,
    pub onset_factor: f64,
    pub offset_factor: f64,
    /// Keep per-window band energies in the trace.
    pub dump_energies: bool,
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self {
            window_samples: 256,
            hop_samples: 64,
            band_Hz: [400.0, 2500.0],
            extra_latency_ms: 0.0,
            onset_threshold: None,
            offset_threshold: None,
            calibration_s: 10.0,
            calibration_seed: 0xCA1_1B8A7E,
            onset_factor: 2.0,
            offset_factor: 1.2,
            dump_energies: false,
        }
    }
}

impl DetectorSection {
    /// Detector settings with thresholds still to be filled in when not given.
    pub fn base_config(&self) -> DetectorConfig {
        DetectorConfig {
            window_samples: self.window_samples,
            hop_samples: self.hop_samples,
            band_hz: (self.band_Hz[0], self.band_Hz[1]),
            onset_threshold: self.onset_threshold.unwrap_or(1.0),
            offset_threshold: self.offset_threshold.unwrap_or(0.0),
            extra_latency: self.extra_latency_ms * 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[allow(non_snake_case)]
pub struct TactileSection {
    pub pzr_rate_Hz: f64,
    pub pzr_pitch_mm: f64,
    pub pzr: PzrConfig,
    pub pze: PzeConfig,
}

impl Default for TactileSection {
    fn default() -> Self {
        Self { pzr_rate_Hz: 100.0, pzr_pitch_mm: 2.0, pzr: PzrConfig::default(), pze: PzeConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSection {
    /// Uniform sampling ranges keyed by dotted parameter path.
    pub ranges: BTreeMap<String, [f64; 2]>,
}

/// Validated, ready-to-simulate form of a scenario.
#[derive(Debug, Clone)]
pub struct BuiltScenario {
    pub chains: Vec<FingerChain>,
    /// True contacts, ordered by finger id.
    pub contacts: Vec<Contact>,
    pub pad_offsets: Vec<[f64; 2]>,
    pub object_frame: Isometry3<f64>,
    pub model: GraspModel,
    pub traction: Vec<(f64, f64)>,
    pub pull_direction: Vector3<f64>,
    pub scripted_grasp: Option<Vec<(f64, f64)>>,
    pub controller: ControllerConfig,
    pub dt: f64,
    pub steps: usize,
}

fn vec3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

fn pose(p: [f64; 3], rpy: [f64; 3]) -> Isometry3<f64> {
    Isometry3::from_parts(Translation3::new(p[0], p[1], p[2]), UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2]))
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, BenchError> {
        let cfg: Self = toml::from_str(s).map_err(|e| BenchError::ScenarioInvalid(e.to_string()))?;
        cfg.build()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            BenchError::ScenarioInvalid(m) => BenchError::ScenarioInvalid(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String, BenchError> {
        toml::to_string(self).map_err(|e| BenchError::ScenarioInvalid(e.to_string()))
    }

    /// Overrides one numeric parameter by dotted path. Array elements are
    /// addressed by index.
    pub fn set_param(&mut self, key: &str, value: f64) -> Result<(), BenchError> {
        let unknown = || BenchError::ScenarioInvalid(format!("unknown parameter `{key}`"));
        let mut root = toml::Value::try_from(&*self).map_err(|e| BenchError::ScenarioInvalid(e.to_string()))?;
        let mut node = &mut root;
        for part in key.split('.') {
            node = match node {
                toml::Value::Table(t) => t.get_mut(part).ok_or_else(unknown)?,
                toml::Value::Array(a) => {
                    let i: usize = part.parse().map_err(|_| unknown())?;
                    a.get_mut(i).ok_or_else(unknown)?
                }
                _ => return Err(unknown()),
            };
        }
        *node = match node {
            toml::Value::Integer(_) if value.fract() == 0.0 && value.abs() < 9.0e15 => toml::Value::Integer(value as i64),
            toml::Value::Integer(_) => {
                return Err(BenchError::ScenarioInvalid(format!("`{key}` takes an integer, got {value}")))
            }
            toml::Value::Float(_) => toml::Value::Float(value),
            _ => return Err(BenchError::ScenarioInvalid(format!("`{key}` is not numeric"))),
        };
        let next: Self = root.try_into().map_err(|e: toml::de::Error| BenchError::ScenarioInvalid(e.to_string()))?;
        next.build()?;
        *self = next;
        Ok(())
    }

    /// Validates and assembles geometry, profiles and controller settings.
    pub fn build(&self) -> Result<BuiltScenario, BenchError> {
        let invalid = |m: String| Err(BenchError::ScenarioInvalid(m));
        let finite_pos = |x: f64| x.is_finite() && x > 0.0;
        if !finite_pos(self.dt_ms) || !finite_pos(self.duration_ms) {
            return invalid("dt_ms and duration_ms must be positive".into());
        }
        if (self.dt_ms - 0.1).abs() > 1e-12 {
            return invalid(format!("dt_ms must equal the 0.1 ms tactile sample period, got {}", self.dt_ms));
        }
        if self.trace_decimation == 0 {
            return invalid("trace_decimation must be at least 1".into());
        }
        if !finite_pos(self.object.mass_kg) || !finite_pos(self.object.slide_limit_mm) || !(self.object.damping_Ns_per_m >= 0.0) {
            return invalid("object mass and slide limit must be positive, damping non-negative".into());
        }
        if !(self.friction.mu_static >= 0.0) {
            return invalid(format!("negative friction coefficient {}", self.friction.mu_static));
        }
        if !(self.friction.kinetic_ratio > 0.0 && self.friction.kinetic_ratio <= 1.0) {
            return invalid("kinetic_ratio must lie in (0, 1]".into());
        }

        let mut chains = Vec::with_capacity(self.fingers.len());
        for f in &self.fingers {
            if chains.iter().any(|c: &FingerChain| c.id == f.id) {
                return invalid(format!("finger id {} appears twice", f.id));
            }
            if f.tau_min_Nm.len() != f.link_lengths_m.len() || f.tau_max_Nm.len() != f.link_lengths_m.len() {
                return invalid(format!("finger {}: one torque limit per joint required", f.id));
            }
            if f.link_lengths_m.iter().any(|l| !finite_pos(*l)) {
                return invalid(format!("finger {}: link lengths must be positive", f.id));
            }
            let limits: Vec<(f64, f64)> = f.tau_min_Nm.iter().copied().zip(f.tau_max_Nm.iter().copied()).collect();
            if let Some(j) = limits.iter().position(|(lo, hi)| !(lo <= hi)) {
                return invalid(format!("finger {} joint {j}: tau_min > tau_max", f.id));
            }
            let axes: Vec<Vector3<f64>> = f.joint_axes.iter().map(|a| vec3(*a)).collect();
            let chain = FingerChain::serial(f.id, pose(f.base_position_m, f.base_rpy_rad), &f.link_lengths_m, &axes, &f.joint_angles_rad, &limits)
                .map_err(|e| BenchError::ScenarioInvalid(format!("finger {}: {e}", f.id)))?;
            chains.push(chain);
        }

        if self.contacts.is_empty() {
            return invalid("no contacts".into());
        }
        let mut indexed: Vec<&ContactConfig> = self.contacts.iter().collect();
        indexed.sort_by_key(|c| c.finger);
        let mut contacts = Vec::with_capacity(indexed.len());
        let mut pad_offsets = Vec::with_capacity(indexed.len());
        for c in indexed {
            if !self.fingers.iter().any(|f| f.id == c.finger) {
                return invalid(format!("contact references unknown finger {}", c.finger));
            }
            let contact = Contact::new(vec3(c.position_m), vec3(c.normal), self.friction.mu_static, c.finger, c.phalanx)
                .map_err(|e| BenchError::ScenarioInvalid(format!("contact on finger {}: {e}", c.finger)))?;
            contacts.push(contact);
            pad_offsets.push(c.pad_offset_mm);
        }
        let object_frame = pose(self.object.frame_position_m, self.object.frame_rpy_rad);
        let model = GraspModel::new(contacts.clone(), &chains, object_frame)
            .map_err(|e| BenchError::ScenarioInvalid(format!("grasp model: {e}")))?;

        let pull = vec3(self.traction.direction);
        if (pull.norm() - 1.0).abs() > 1e-6 {
            return invalid("traction direction must be a unit vector".into());
        }
        if let Some(c) = contacts.iter().find(|c| c.normal.dot(&pull).abs() > 1e-3) {
            return invalid(format!("pull direction is not tangent at the contact of finger {}", c.finger_id));
        }
        let traction = self.traction.profile().knots("traction")?;

        if !(self.grasp.baseline_mean_normal_N > 0.0) {
            return invalid("baseline_mean_normal_N must be positive".into());
        }
        let scripted_grasp = match (&self.grasp.scripted, self.mode) {
            (Some(p), _) => Some(p.knots("grasp.scripted")?),
            (None, TrialMode::Scripted) => return invalid("scripted mode needs a grasp.scripted profile".into()),
            (None, TrialMode::ClosedLoop) => None,
        };

        let c = &self.controller;
        if !(c.alpha >= 0.0) {
            return invalid("controller alpha must be non-negative".into());
        }
        let ms = 1e-3;
        let policy = match (self.mode, c.policy) {
            (TrialMode::Scripted, _) | (_, PolicyKind::Scripted) => AlphaPolicy::Scripted,
            (TrialMode::ClosedLoop, PolicyKind::SingleStep) => AlphaPolicy::SingleStep { alpha: c.alpha },
            (TrialMode::ClosedLoop, PolicyKind::Progressive) => AlphaPolicy::Progressive { alpha: c.alpha, ramp_s: c.ramp_ms * ms },
        };
        for (name, v) in [
            ("ramp_ms", c.ramp_ms),
            ("processing_latency_ms", c.processing_latency_ms),
            ("hold_window_ms", c.hold_window_ms),
            ("refractory_ms", c.refractory_ms),
            ("stale_model_ms", c.stale_model_ms),
            ("actuation_tol", c.actuation_tol),
        ] {
            if !(v >= 0.0) {
                return invalid(format!("controller.{name} must be non-negative"));
            }
        }
        let controller = ControllerConfig {
            policy,
            processing_latency_s: c.processing_latency_ms * ms,
            hold_window_s: c.hold_window_ms * ms,
            refractory_s: c.refractory_ms * ms,
            stale_model_s: c.stale_model_ms * ms,
            actuation_tol: c.actuation_tol,
            ..ControllerConfig::default()
        };

        let d = &self.detector;
        let mut probe = d.base_config();
        if d.onset_threshold.is_none() || d.offset_threshold.is_none() {
            probe.onset_threshold = 1.0;
            probe.offset_threshold = 0.5;
        }
        probe.validate().map_err(|e| BenchError::ScenarioInvalid(format!("detector: {e}")))?;
        if d.onset_threshold.is_none() && !(d.calibration_s * 1e4 >= d.window_samples as f64) {
            return invalid("detector calibration run is shorter than one window".into());
        }
        if !(d.onset_factor > d.offset_factor && d.offset_factor > 0.0) {
            return invalid("need onset_factor > offset_factor > 0".into());
        }
        if !finite_pos(self.tactile.pzr_rate_Hz) || !finite_pos(self.tactile.pzr_pitch_mm) || !(self.tactile.pzr.noise_std >= 0.0) {
            return invalid("tactile rates, pitch and noise must be positive".into());
        }

        let dt = self.dt_ms * ms;
        Ok(BuiltScenario {
            chains,
            contacts,
            pad_offsets,
            object_frame,
            model,
            traction,
            pull_direction: pull,
            scripted_grasp,
            controller,
            dt,
            steps: (self.duration_ms / self.dt_ms).round() as usize,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"
name = "minimal"
mode = "closed_loop"
seed = 1
duration_ms = 100.0

[object]
mass_kg = 0.2
slide_limit_mm = 50.0

[friction]
mu_static = 0.5

[[fingers]]
id = 0
base_position_m = [0.03, 0.0, -0.05]
link_lengths_m = [0.05]
joint_axes = [[0.0, -1.0, 0.0]]
joint_angles_rad = [-1.5707963267948966]
tau_min_Nm = [-2.0]
tau_max_Nm = [2.0]

[[fingers]]
id = 1
base_position_m = [-0.03, 0.0, -0.05]
link_lengths_m = [0.05]
joint_axes = [[0.0, 1.0, 0.0]]
joint_angles_rad = [-1.5707963267948966]
tau_min_Nm = [-2.0]
tau_max_Nm = [2.0]

[[contacts]]
finger = 1
phalanx = 0
position_m = [-0.03, 0.0, 0.0]
normal = [1.0, 0.0, 0.0]

[[contacts]]
finger = 0
phalanx = 0
position_m = [0.03, 0.0, 0.0]
normal = [-1.0, 0.0, 0.0]

[traction]
direction = [0.0, 1.0, 0.0]
knots_ms_N = [[0.0, 1.0], [50.0, 2.0]]

[grasp]
baseline_mean_normal_N = 8.0

[controller]
policy = "single_step"
alpha = 6.0
"#;

    fn minimal() -> ScenarioConfig {
        ScenarioConfig::from_toml_str(MINIMAL).unwrap()
    }

    #[test]
    fn parses_and_orders_contacts() {
        let b = minimal().build().unwrap();
        assert_eq!(b.contacts[0].finger_id, 0);
        assert_eq!(b.steps, 1000);
        assert_eq!(b.traction, vec![(0.0, 1.0), (0.05, 2.0)]);
    }

    #[test]
    fn toml_round_trip() {
        let a = minimal();
        let text = a.to_toml_string().unwrap();
        let b = ScenarioConfig::from_toml_str(&text).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_unknown_finger() {
        let bad = MINIMAL.replacen("finger = 1", "finger = 7", 1);
        assert!(matches!(ScenarioConfig::from_toml_str(&bad), Err(BenchError::ScenarioInvalid(_))));
    }

    #[test]
    fn rejects_inverted_torque_limits() {
        let bad = MINIMAL.replacen("tau_min_Nm = [-2.0]", "tau_min_Nm = [3.0]", 1);
        assert!(ScenarioConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn rejects_negative_mu() {
        let bad = MINIMAL.replace("mu_static = 0.5", "mu_static = -0.1");
        assert!(ScenarioConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn rejects_unsorted_profile() {
        let bad = MINIMAL.replace("[[0.0, 1.0], [50.0, 2.0]]", "[[50.0, 1.0], [0.0, 2.0]]");
        assert!(ScenarioConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = MINIMAL.replace("mu_static = 0.5", "mu_static = 0.5\nmu_dynamic = 0.4");
        assert!(ScenarioConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn set_param_by_path() {
        let mut s = minimal();
        s.set_param("friction.mu_static", 0.3).unwrap();
        assert_eq!(s.friction.mu_static, 0.3);
        s.set_param("traction.knots_ms_N.1.1", 4.5).unwrap();
        assert_eq!(s.traction.knots_ms_N.as_ref().unwrap()[1], [50.0, 4.5]);
        s.set_param("seed", 9.0).unwrap();
        assert_eq!(s.seed, 9);
        assert!(s.set_param("friction.nope", 1.0).is_err());
        assert!(s.set_param("friction.mu_static", -1.0).is_err());
        assert_eq!(s.friction.mu_static, 0.3);
    }

    #[test]
    fn step_profile_knots() {
        let p = ProfileConfig { initial_N: Some(3.0), final_N: Some(7.0), start_ms: Some(100.0), ramp_ms: Some(50.0), ..Default::default() };
        let k = p.knots("t").unwrap();
        assert_eq!(interpolate(&k, 0.0), 3.0);
        assert!((interpolate(&k, 0.125) - 5.0).abs() < 1e-12);
        assert_eq!(interpolate(&k, 1.0), 7.0);
        assert_eq!(p.first_rise(), Some(0.1));
    }
}
