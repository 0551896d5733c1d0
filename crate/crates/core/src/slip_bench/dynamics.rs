//! One-degree-of-freedom Coulomb stick–slip slide.

use nalgebra::{DVector, Vector2, Vector3};

use super::BenchError;
use crate::controller::TorqueCommand;
use crate::grasp_model::{Contact, ContactForceVector, GraspModel};

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsParams {
    pub mass: f64,
    pub mu_static: f64,
    pub mu_kinetic: f64,
    /// Viscous term opposing sliding, N·s/m.
    pub damping: f64,
    /// Speed above which the ground truth reports slip, m/s.
    pub v_eps: f64,
    /// Travel after which the object has left the grasp, m.
    pub slide_limit: f64,
    /// Pull direction, base frame.
    pub pull_direction: Vector3<f64>,
}

impl DynamicsParams {
    pub fn new(mass: f64, mu_static: f64, kinetic_ratio: f64, pull_direction: Vector3<f64>) -> Self {
        Self {
            mass,
            mu_static,
            mu_kinetic: kinetic_ratio * mu_static,
            damping: 0.0,
            v_eps: 1e-4,
            slide_limit: 0.05,
            pull_direction,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    /// Travel along the pull direction, m.
    pub object_position: f64,
    pub object_velocity: f64,
    /// Total contact forces on the object: grip plus traction reaction.
    pub contact_forces: ContactForceVector,
    pub traction: f64,
    pub clock: f64,
    /// Ground-truth slip flag.
    pub slipping: bool,
    pub at_limit: bool,
}

impl SimState {
    pub fn at_rest(num_contacts: usize) -> Self {
        Self {
            object_position: 0.0,
            object_velocity: 0.0,
            contact_forces: ContactForceVector::zeros(num_contacts),
            traction: 0.0,
            clock: 0.0,
            slipping: false,
            at_limit: false,
        }
    }
}

/// Adds each contact's share of the traction reaction to the grip forces.
/// Shares are proportional to normal force.
pub fn total_contact_forces(
    contacts: &[Contact],
    grasp_forces: &ContactForceVector,
    traction: f64,
    pull_direction: &Vector3<f64>,
) -> ContactForceVector {
    let normals = grasp_forces.normals();
    let sum: f64 = normals.iter().map(|f| f.max(0.0)).sum();
    let mut total = grasp_forces.clone();
    for (i, c) in contacts.iter().enumerate() {
        let share = if sum > 0.0 { normals[i].max(0.0) / sum } else { 1.0 / contacts.len() as f64 };
        let reaction = -pull_direction * (share * traction);
        let t = Vector2::new(reaction.dot(&c.tangent1), reaction.dot(&c.tangent2));
        let mut local = total.local(i);
        local[1] += t[0];
        local[2] += t[1];
        total.set_local(i, &local);
    }
    total
}

/// Static cone margins `μ_s f_n − |f_t|` of the total contact forces.
pub fn static_margins(total: &ContactForceVector, mu_static: f64) -> Vec<f64> {
    (0..total.num_contacts())
        .map(|i| mu_static * total.normal(i) - total.tangential(i).norm())
        .collect()
}

/// Advances the slide by `dt` under constant grip forces and traction.
pub fn step_dynamics(
    state: &SimState,
    contacts: &[Contact],
    grasp_forces: &ContactForceVector,
    traction: f64,
    dt: f64,
    params: &DynamicsParams,
) -> Result<SimState, BenchError> {
    if !(dt > 0.0) {
        return Err(BenchError::NonFiniteState("dt must be positive".into()));
    }
    if grasp_forces.num_contacts() != contacts.len() {
        return Err(BenchError::NonFiniteState(format!(
            "{} grip forces for {} contacts",
            grasp_forces.num_contacts(),
            contacts.len()
        )));
    }
    let total = total_contact_forces(contacts, grasp_forces, traction, &params.pull_direction);
    let normal_sum: f64 = grasp_forces.normals().iter().map(|f| f.max(0.0)).sum();
    let mut next = state.clone();
    next.clock = state.clock + dt;
    next.traction = traction;
    next.contact_forces = total.clone();

    if state.at_limit {
        next.object_velocity = 0.0;
        next.slipping = false;
        return Ok(next);
    }

    let v = state.object_velocity;
    let holds = v == 0.0 && static_margins(&total, params.mu_static).iter().all(|m| *m >= 0.0);
    if !holds {
        let force = traction - params.mu_kinetic * normal_sum - params.damping * v;
        let v_new = v + force / params.mass * dt;
        // Stick once the velocity would change sign.
        next.object_velocity = v_new.max(0.0);
        next.object_position = state.object_position + next.object_velocity * dt;
    } else {
        next.object_velocity = 0.0;
    }
    if next.object_position >= params.slide_limit {
        next.object_position = params.slide_limit;
        next.object_velocity = 0.0;
        next.at_limit = true;
    }
    if !next.object_position.is_finite() || !next.object_velocity.is_finite() {
        return Err(BenchError::NonFiniteState(format!("t = {}", next.clock)));
    }
    next.slipping = next.object_velocity > params.v_eps;
    Ok(next)
}

/// Contact forces realized by a controller command: `f_base + α f0*`.
///
/// The command must decompose as `tau_base + α J^T f0*` under `model`.
pub fn map_torques_to_contact_forces(
    cmd: &TorqueCommand,
    model: &GraspModel,
    f_base: &ContactForceVector,
) -> Result<ContactForceVector, BenchError> {
    let f0 = &cmd.f0_star.0;
    if f0.len() != model.j.nrows() || f_base.0.len() != f0.len() || cmd.tau_cmd.len() != model.j.ncols() {
        return Err(BenchError::UnknownDecomposition("dimensions disagree with the model".into()));
    }
    let expected: DVector<f64> = &cmd.tau_base + model.j.tr_mul(f0) * cmd.alpha;
    let scale = 1.0 + expected.amax().max(cmd.tau_cmd.amax());
    let err = (&cmd.tau_cmd - &expected).amax();
    if !(cmd.alpha >= 0.0) || err > 1e-9 * scale {
        return Err(BenchError::UnknownDecomposition(format!("torque residual {err:.3e}")));
    }
    Ok(ContactForceVector(&f_base.0 + f0 * cmd.alpha))
}
