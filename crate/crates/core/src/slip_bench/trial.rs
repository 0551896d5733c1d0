//! Single trial: sensors, controller and slide on one simulated clock.

use std::collections::VecDeque;
use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::dynamics::{map_torques_to_contact_forces, static_margins, step_dynamics, DynamicsParams, SimState};
use super::scenario::{interpolate, BuiltScenario, ScenarioConfig, TrialMode};
use super::BenchError;
use crate::controller::{Controller, Mode, RscState, SlipCue};
use crate::grasp_model::{Contact, ContactForceVector, GraspModel};
use crate::nullspace::{analyze_grasp_with, GraspAnalysis, DEFAULT_RANK_TOL};
use crate::qp::{assemble_qp, solve_internal_qp, QpOptions};
use crate::tactile_sim::pze::PZE_SAMPLE_PERIOD_S;
use crate::tactile_sim::{
    calibrate_thresholds, estimate_contact, render_pzr, sub_rng, DetectorConfig, PadGeometry, PzeGenerator, SlipDetector,
};

/// Per-trial results. Delays are in seconds, displacement in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub onset_detection_delay: Option<f64>,
    pub offset_detection_delay: Option<f64>,
    pub reaction_to_stop_delay: Option<f64>,
    pub pre_stop_displacement: f64,
    pub stabilized: bool,
    pub slip_start: Option<f64>,
    pub slip_stop: Option<f64>,
    pub first_onset_cue: Option<f64>,
    pub reaction_time: Option<f64>,
    /// Reinforcement events issued by the controller; in scripted mode,
    /// the number of grip increases in the scripted profile.
    pub reinforcements: usize,
    pub commands: usize,
    pub onset_cues: usize,
    /// Onset cues delivered before ground-truth slip started.
    pub early_onset_cues: usize,
    /// Largest `|G Δf0| / α` over all commands.
    pub max_wrench_ratio: f64,
    pub rsc_applicable: bool,
    pub final_mode: Mode,
    pub final_position: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub traction: f64,
    pub position: f64,
    pub velocity: f64,
    pub normals: Vec<f64>,
    pub margins: Vec<f64>,
    pub slipping: bool,
    pub cue_active: bool,
    pub mode: Mode,
    pub alpha: f64,
    pub tau_cmd: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommandLogRow {
    pub t: f64,
    pub mode: Mode,
    pub alpha: f64,
    pub tau_cmd: Vec<f64>,
    pub wrench_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyRow {
    pub window_end: f64,
    pub channel: usize,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub num_contacts: usize,
    pub num_joints: usize,
    pub rows: Vec<TraceRow>,
    pub commands: Vec<CommandLogRow>,
    pub energies: Vec<EnergyRow>,
    pub onset_threshold: f64,
    pub offset_threshold: f64,
}

impl Trace {
    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["t_s", "traction_N", "object_pos_m", "object_vel_mps"].iter().map(|s| s.to_string()).collect();
        h.extend((0..self.num_contacts).map(|i| format!("fn_{i}_N")));
        h.extend((0..self.num_contacts).map(|i| format!("margin_{i}_N")));
        h.extend(["slip_ground_truth", "cue_detected", "mode", "alpha_N"].iter().map(|s| s.to_string()));
        h.extend((0..self.num_joints).map(|j| format!("tau_cmd_{j}_Nm")));
        h
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), BenchError> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| BenchError::Io(e.to_string());
        w.write_record(self.header()).map_err(io)?;
        for r in &self.rows {
            let mut rec = vec![r.t.to_string(), r.traction.to_string(), r.position.to_string(), r.velocity.to_string()];
            rec.extend(r.normals.iter().map(|x| x.to_string()));
            rec.extend(r.margins.iter().map(|x| x.to_string()));
            rec.push((r.slipping as u8).to_string());
            rec.push((r.cue_active as u8).to_string());
            rec.push(r.mode.as_str().to_string());
            rec.push(r.alpha.to_string());
            rec.extend(r.tau_cmd.iter().map(|x| x.to_string()));
            w.write_record(rec).map_err(io)?;
        }
        w.flush().map_err(|e| BenchError::Io(e.to_string()))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Controller command log as CSV.
    pub fn write_commands_csv<W: Write>(&self, out: W) -> Result<(), BenchError> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| BenchError::Io(e.to_string());
        let mut h = vec!["t_s".to_string(), "mode".into(), "alpha_N".into(), "wrench_residual_N".into()];
        h.extend((0..self.num_joints).map(|j| format!("tau_cmd_{j}_Nm")));
        w.write_record(h).map_err(io)?;
        for c in &self.commands {
            let mut rec = vec![c.t.to_string(), c.mode.as_str().to_string(), c.alpha.to_string(), c.wrench_residual.to_string()];
            rec.extend(c.tau_cmd.iter().map(|x| x.to_string()));
            w.write_record(rec).map_err(io)?;
        }
        w.flush().map_err(|e| BenchError::Io(e.to_string()))
    }

    /// Per-window band energies, when they were recorded.
    pub fn write_energies_csv<W: Write>(&self, out: W) -> Result<(), BenchError> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| BenchError::Io(e.to_string());
        w.write_record(["window_end_s", "channel", "band_energy"]).map_err(io)?;
        for e in &self.energies {
            w.write_record([e.window_end.to_string(), e.channel.to_string(), e.energy.to_string()]).map_err(io)?;
        }
        w.flush().map_err(|e| BenchError::Io(e.to_string()))
    }
}

/// Baseline grip: the optimal internal-force profile of the true grasp
/// scaled to the requested mean normal force, or equal pure normal forces
/// when the grasp admits no controllable internal force.
pub fn baseline_forces(model: &GraspModel, analysis: &GraspAnalysis, chains: &[crate::grasp_model::FingerChain], mean_normal: f64) -> Result<ContactForceVector, BenchError> {
    let nc = model.num_contacts();
    if analysis.class.rsc_applicable {
        let problem = assemble_qp(model, &analysis.internal, chains).map_err(|e| BenchError::ScenarioInvalid(format!("baseline QP: {e}")))?;
        let profile = solve_internal_qp(&problem, &QpOptions::default()).map_err(|e| BenchError::ScenarioInvalid(format!("baseline QP: {e}")))?;
        let mean: f64 = profile.f0_star.normals().iter().sum::<f64>() / nc as f64;
        if !(mean > 0.0) {
            return Err(BenchError::ScenarioInvalid("baseline profile has no normal force".into()));
        }
        Ok(ContactForceVector(&profile.f0_star.0 * (mean_normal / mean)))
    } else {
        let mut f = ContactForceVector::zeros(nc);
        for i in 0..nc {
            f.0[3 * i] = mean_normal;
        }
        Ok(f)
    }
}

fn detector_config(scenario: &ScenarioConfig, mean_normal: f64) -> Result<DetectorConfig, BenchError> {
    let d = &scenario.detector;
    let mut cfg = d.base_config();
    if d.onset_threshold.is_none() || d.offset_threshold.is_none() {
        let (on, off) = calibrate_thresholds(
            &scenario.tactile.pze,
            &cfg,
            d.calibration_seed,
            d.calibration_s,
            mean_normal,
            d.onset_factor,
            d.offset_factor,
        )?;
        cfg.onset_threshold = d.onset_threshold.unwrap_or(on);
        cfg.offset_threshold = d.offset_threshold.unwrap_or(off);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn pads(b: &BuiltScenario, pitch: f64) -> Vec<PadGeometry> {
    b.contacts
        .iter()
        .zip(&b.pad_offsets)
        .enumerate()
        .map(|(i, (c, off))| PadGeometry {
            pad_id: i,
            center: c.position + c.tangent1 * (off[0] * 1e-3) + c.tangent2 * (off[1] * 1e-3),
            u: c.tangent1,
            v: c.tangent2,
            normal: c.normal,
            pitch,
        })
        .collect()
}

struct Fusion {
    active: Vec<bool>,
    fused: bool,
}

impl Fusion {
    /// Slip is reported while any channel is active.
    fn apply(&mut self, channel: usize, cue: &SlipCue) -> Option<SlipCue> {
        self.active[channel] = cue.detected;
        let now = self.active.iter().any(|a| *a);
        if now == self.fused {
            return None;
        }
        self.fused = now;
        let finger_ids = if now { (0..self.active.len()).filter(|&i| self.active[i]).collect() } else { cue.finger_ids.clone() };
        Some(SlipCue { detected: now, confidence: cue.confidence, timestamp: cue.timestamp, finger_ids })
    }
}

/// Runs one trial and returns its metrics and time-series trace.
pub fn run_trial(scenario: &ScenarioConfig) -> Result<(TrialMetrics, Trace), BenchError> {
    let b = scenario.build()?;
    let nc = b.contacts.len();
    let dt = PZE_SAMPLE_PERIOD_S;
    let mean_normal = scenario.grasp.baseline_mean_normal_N;

    let analysis = analyze_grasp_with(&b.model.g, &b.model.j, DEFAULT_RANK_TOL, b.controller.actuation_tol)
        .map_err(|e| BenchError::ScenarioInvalid(format!("grasp analysis: {e}")))?;
    let f_base = baseline_forces(&b.model, &analysis, &b.chains, mean_normal)?;
    let tau_base = b.model.j.tr_mul(&f_base.0);
    let controller = Controller::new(b.controller.clone(), b.chains.clone());
    for j in 0..tau_base.len() {
        let slack = 1e-9 * (1.0 + tau_base[j].abs());
        if tau_base[j] < controller.tau_min[j] - slack || tau_base[j] > controller.tau_max[j] + slack {
            return Err(BenchError::ScenarioInvalid(format!(
                "baseline torque {:.4} N·m on joint {j} is outside [{}, {}]",
                tau_base[j], controller.tau_min[j], controller.tau_max[j]
            )));
        }
    }
    let tau_base = DVector::from_iterator(
        tau_base.len(),
        tau_base.iter().enumerate().map(|(j, t)| t.clamp(controller.tau_min[j], controller.tau_max[j])),
    );

    let det_cfg = detector_config(scenario, mean_normal)?;
    let pze_cfg = scenario.tactile.pze;
    let mut generators: Vec<PzeGenerator> = (0..nc).map(|i| PzeGenerator::new(pze_cfg, scenario.seed, i as u64)).collect();
    let mut detectors = (0..nc).map(|i| SlipDetector::new(det_cfg.clone(), b.contacts[i].finger_id)).collect::<Result<Vec<_>, _>>()?;
    let pzr_cfg = scenario.tactile.pzr;
    let pad_geoms = pads(&b, scenario.tactile.pzr_pitch_mm * 1e-3);
    let mut pzr_rng = sub_rng(scenario.seed, 0x9A2);
    let pzr_period = ((1.0 / scenario.tactile.pzr_rate_Hz) / dt).round().max(1.0) as usize;

    let mut params = DynamicsParams::new(scenario.object.mass_kg, scenario.friction.mu_static, scenario.friction.kinetic_ratio, b.pull_direction);
    params.damping = scenario.object.damping_Ns_per_m;
    params.slide_limit = scenario.object.slide_limit_mm * 1e-3;

    let grip_at = |t: f64, applied: &ContactForceVector| -> ContactForceVector {
        match (&b.scripted_grasp, scenario.mode) {
            (Some(k), TrialMode::Scripted) => ContactForceVector(&f_base.0 * (interpolate(k, t) / mean_normal)),
            _ => applied.clone(),
        }
    };

    let mut trace = Trace {
        num_contacts: nc,
        num_joints: tau_base.len(),
        onset_threshold: det_cfg.onset_threshold,
        offset_threshold: det_cfg.offset_threshold,
        ..Trace::default()
    };
    let mut state = SimState::at_rest(nc);
    let mut rsc = RscState::new(tau_base.clone());
    let mut applied = f_base.clone();
    let mut tau_now = tau_base.clone();
    let mut prev_normals = grip_at(0.0, &applied).normals();
    let mut pending: VecDeque<(usize, SlipCue)> = VecDeque::new();
    let mut fusion = Fusion { active: vec![false; nc], fused: false };
    let mut fused_changes: Vec<(f64, bool)> = Vec::new();

    let mut slip_start: Option<(f64, f64)> = None;
    let mut last_stop: Option<(f64, f64)> = None;
    let mut reinforcements = 0;
    let mut commands = 0;
    let mut max_wrench_ratio: f64 = 0.0;
    let mut first_command: Option<f64> = None;

    for n in 0..b.steps {
        let t = n as f64 * dt;
        let clock = (n + 1) as f64 * dt;
        let traction = interpolate(&b.traction, t);
        let grip = grip_at(t, &applied);
        let prev_v = state.object_velocity;
        state = step_dynamics(&state, &b.contacts, &grip, traction, dt, &params)?;

        if state.slipping && slip_start.is_none() {
            slip_start = Some((clock, state.object_position));
        }
        if prev_v > 0.0 && state.object_velocity == 0.0 && !state.at_limit {
            last_stop = Some((clock, state.object_position));
        }

        let normals = grip.normals();
        for i in 0..nc {
            let rate = (normals[i] - prev_normals[i]) / dt;
            let sample = generators[i].next_sample(state.object_velocity, normals[i], rate);
            if let Some(report) = detectors[i].push(sample) {
                if scenario.detector.dump_energies {
                    trace.energies.push(EnergyRow { window_end: report.window_end, channel: i, energy: report.energy });
                }
                if let Some(cue) = report.cue {
                    pending.push_back((i, cue));
                }
            }
        }
        prev_normals = normals.clone();

        let mut due = Vec::new();
        while pending.front().is_some_and(|(_, c)| c.timestamp <= clock + 1e-12) {
            let (ch, cue) = pending.pop_front().expect("checked non-empty");
            if let Some(f) = fusion.apply(ch, &cue) {
                fused_changes.push((clock, f.detected));
                due.push(f);
            }
        }

        let update = if n % pzr_period == 0 {
            let mut est = Vec::with_capacity(nc);
            for (i, c) in b.contacts.iter().enumerate() {
                let frame = render_pzr(&c.position, normals[i].max(0.0), &pad_geoms[i], &pzr_cfg, clock, Some(&mut pzr_rng));
                let Ok(frame) = frame else { break };
                let Some((p, nrm)) = estimate_contact(&frame, &pad_geoms[i], &pzr_cfg) else { break };
                match Contact::new(p, nrm, c.mu, c.finger_id, c.phalanx_id) {
                    Ok(e) => est.push(e),
                    Err(_) => break,
                }
            }
            if est.len() == nc {
                GraspModel::new(est, &b.chains, b.object_frame).ok()
            } else {
                None
            }
        } else {
            None
        };

        let mut update = update;
        let mut cues = due.into_iter().map(Some).collect::<Vec<_>>();
        if cues.is_empty() {
            cues.push(None);
        }
        for cue in cues {
            let before = rsc.mode;
            let (next, cmd) = controller.step(rsc, cue.as_ref(), update.take().as_ref(), clock)?;
            rsc = next;
            if let Some(cmd) = cmd {
                let model = rsc.model().ok_or_else(|| BenchError::UnknownDecomposition("command without a model".into()))?;
                applied = map_torques_to_contact_forces(&cmd, model, &f_base)?;
                tau_now = cmd.tau_cmd.clone();
                commands += 1;
                if before == Mode::Slipping {
                    reinforcements += 1;
                    first_command.get_or_insert(clock);
                }
                if cmd.alpha > 0.0 {
                    max_wrench_ratio = max_wrench_ratio.max(cmd.wrench_residual / cmd.alpha);
                }
                trace.commands.push(CommandLogRow {
                    t: cmd.timestamp,
                    mode: rsc.mode,
                    alpha: cmd.alpha,
                    tau_cmd: cmd.tau_cmd.iter().copied().collect(),
                    wrench_residual: cmd.wrench_residual,
                });
            }
        }

        if n % scenario.trace_decimation == 0 {
            trace.rows.push(TraceRow {
                t: clock,
                traction,
                position: state.object_position,
                velocity: state.object_velocity,
                normals: state.contact_forces.normals(),
                margins: static_margins(&state.contact_forces, params.mu_static),
                slipping: state.slipping,
                cue_active: fusion.fused,
                mode: rsc.mode,
                alpha: rsc.alpha,
                tau_cmd: tau_now.iter().copied().collect(),
            });
        }
    }

    let at_rest = state.object_velocity == 0.0 && !state.at_limit;
    let stabilized = at_rest && (slip_start.is_none() || last_stop.is_some_and(|(t, _)| t >= slip_start.map_or(0.0, |s| s.0)));
    let slip_stop = if stabilized && slip_start.is_some() { last_stop } else { None };
    let x0 = slip_start.map_or(0.0, |s| s.1);
    let pre_stop_displacement = match slip_stop {
        Some((_, x)) => x - x0,
        None if slip_start.is_some() => state.object_position - x0,
        None => state.object_position,
    };

    let onsets: Vec<f64> = fused_changes.iter().filter(|c| c.1).map(|c| c.0).collect();
    let first_onset_cue = onsets.first().copied();
    let early_onset_cues = onsets.iter().filter(|&&t| slip_start.is_none_or(|s| t < s.0)).count();
    let onset_detection_delay = match (first_onset_cue, slip_start) {
        (Some(c), Some(s)) => Some(c - s.0),
        _ => None,
    };
    let offset_detection_delay = slip_stop.and_then(|(ts, _)| {
        let active_at_stop = fused_changes.iter().take_while(|c| c.0 <= ts).last().is_some_and(|c| c.1);
        if !active_at_stop {
            Some(0.0)
        } else {
            fused_changes.iter().find(|c| c.0 > ts && !c.1).map(|c| c.0 - ts)
        }
    });
    let reaction_time = match scenario.mode {
        TrialMode::Scripted => scenario.grasp.scripted.as_ref().and_then(|p| p.first_rise()),
        TrialMode::ClosedLoop => first_command,
    };
    let reaction_to_stop_delay = match (slip_stop, reaction_time) {
        (Some((ts, _)), Some(r)) if ts >= r => Some(ts - r),
        _ => None,
    };

    // A scripted grip increase plays the role of a reinforcement step.
    if scenario.mode == TrialMode::Scripted {
        reinforcements = scenario.grasp.scripted.as_ref().map_or(0, |p| p.rising_steps(b.steps as f64 * dt));
    }
    let metrics = TrialMetrics {
        onset_detection_delay,
        offset_detection_delay,
        reaction_to_stop_delay,
        pre_stop_displacement,
        stabilized,
        slip_start: slip_start.map(|s| s.0),
        slip_stop: slip_stop.map(|s| s.0),
        first_onset_cue,
        reaction_time,
        reinforcements,
        commands,
        onset_cues: onsets.len(),
        early_onset_cues,
        max_wrench_ratio,
        rsc_applicable: analysis.class.rsc_applicable,
        final_mode: rsc.mode,
        final_position: state.object_position,
    };
    Ok((metrics, trace))
}
