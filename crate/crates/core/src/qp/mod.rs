//! Internal-force profile optimization.
//!
//! The profile maximizes
//!
//! ```text
//!     sum_i f_n,i  -  sum_i |f_t,i|^2  -  1/N sum_i (f_n,i - mean(f_n))^2
//! ```
//!
//! over `f = V λ`, with `V` an orthonormal basis of `N(G)`, subject to
//! `tau_min <= J^T f <= tau_max` and `f_n,i >= 0`. Working in λ removes the
//! `G f = 0` equality, leaving a small convex QP. The torque box only sets
//! the scale of the optimum; the returned profile is normalized.

mod admm;

pub use admm::{AdmmSettings, AdmmSolution, AdmmStatus, DenseQp};

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grasp_model::{torque_limits, ContactForceVector, FingerChain, GraspModel};
use crate::nullspace::NullspaceBasis;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("null space is trivial; no internal forces exist")]
    TrivialNullspace,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("torque box must contain zero (joint {joint}: [{min}, {max}])")]
    OriginInfeasible { joint: usize, min: f64, max: f64 },
    #[error("optimal internal force is zero; no direction to normalize")]
    ZeroProfile,
}

/// Relative weights of the three objective terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    pub normal_sum: f64,
    pub tangential: f64,
    pub balance: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self { normal_sum: 1.0, tangential: 1.0, balance: 1.0 }
    }
}

/// The internal-force QP written in null-space coordinates.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub basis: NullspaceBasis,
    /// `J^T`, m × 3n.
    pub jt: DMatrix<f64>,
    pub tau_min: DVector<f64>,
    pub tau_max: DVector<f64>,
    /// Stacked index of each contact's normal component.
    pub normal_selector: Vec<usize>,
    /// Stacked indices of each contact's tangential components.
    pub tangent_selector: Vec<[usize; 2]>,
    pub weights: ObjectiveWeights,
    /// Minimization form `1/2 λ' P λ + q' λ` of the negated objective.
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    /// Rows: `J^T V` (m two-sided torque rows) then `S_n V` (n one-sided rows).
    pub constraint: DMatrix<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

const UNBOUNDED: f64 = 1e20;

impl QpProblem {
    pub fn k(&self) -> usize {
        self.basis.k
    }

    pub fn num_contacts(&self) -> usize {
        self.normal_selector.len()
    }

    pub fn num_joints(&self) -> usize {
        self.jt.nrows()
    }

    /// Inequality count when two-sided torque bounds are split: `2m + n`.
    pub fn num_inequality_rows(&self) -> usize {
        2 * self.num_joints() + self.num_contacts()
    }

    /// Objective value (maximization form) at `λ`.
    pub fn objective(&self, lambda: &DVector<f64>) -> f64 {
        -(0.5 * lambda.dot(&(&self.hessian * lambda)) + self.linear.dot(lambda))
    }

    /// Contact-force vector `V λ`.
    pub fn force(&self, lambda: &DVector<f64>) -> ContactForceVector {
        ContactForceVector(&self.basis.v * lambda)
    }

    fn as_dense(&self) -> DenseQp {
        DenseQp {
            p: self.hessian.clone(),
            q: self.linear.clone(),
            a: self.constraint.clone(),
            l: self.lower.clone(),
            u: self.upper.clone(),
        }
    }
}

/// Writes the internal-force QP over null-space coefficients.
pub fn assemble_qp(model: &GraspModel, basis: &NullspaceBasis, chains: &[FingerChain]) -> Result<QpProblem, QpError> {
    assemble_qp_weighted(model, basis, chains, ObjectiveWeights::default())
}

pub fn assemble_qp_weighted(
    model: &GraspModel,
    basis: &NullspaceBasis,
    chains: &[FingerChain],
    weights: ObjectiveWeights,
) -> Result<QpProblem, QpError> {
    if basis.k == 0 {
        return Err(QpError::TrivialNullspace);
    }
    let nc = model.num_contacts();
    let n = 3 * nc;
    if basis.v.nrows() != n {
        return Err(QpError::DimensionMismatch(format!("basis has {} rows, model has {} force components", basis.v.nrows(), n)));
    }
    let (tau_min, tau_max) = torque_limits(chains);
    if tau_min.len() != model.num_joints() {
        return Err(QpError::DimensionMismatch(format!(
            "chains carry {} joints, Jacobian has {} columns",
            tau_min.len(),
            model.num_joints()
        )));
    }
    let k = basis.k;
    let v = &basis.v;
    let normal_selector: Vec<usize> = (0..nc).map(|i| 3 * i).collect();
    let tangent_selector: Vec<[usize; 2]> = (0..nc).map(|i| [3 * i + 1, 3 * i + 2]).collect();

    // Normal rows of V (nc × k) and tangential rows (2nc × k).
    let a_n = DMatrix::from_fn(nc, k, |r, c| v[(normal_selector[r], c)]);
    let a_t = DMatrix::from_fn(2 * nc, k, |r, c| v[(tangent_selector[r / 2][r % 2], c)]);
    // Centering matrix for the load-balance term.
    let inv_n = 1.0 / nc as f64;
    let centering = DMatrix::from_fn(nc, nc, |r, c| if r == c { 1.0 - inv_n } else { -inv_n });

    let hessian = (a_t.tr_mul(&a_t) * weights.tangential + a_n.tr_mul(&(&centering * &a_n)) * (weights.balance * inv_n)) * 2.0;
    let hessian = (&hessian + hessian.transpose()) * 0.5;
    let linear = -a_n.tr_mul(&DVector::from_element(nc, weights.normal_sum));

    let jt = model.j.transpose();
    let m = jt.nrows();
    let jtv = &jt * v;
    let mut constraint = DMatrix::zeros(m + nc, k);
    constraint.view_mut((0, 0), (m, k)).copy_from(&jtv);
    constraint.view_mut((m, 0), (nc, k)).copy_from(&a_n);
    let mut lower = DVector::zeros(m + nc);
    let mut upper = DVector::from_element(m + nc, UNBOUNDED);
    lower.rows_mut(0, m).copy_from(&tau_min);
    upper.rows_mut(0, m).copy_from(&tau_max);

    Ok(QpProblem {
        basis: basis.clone(),
        jt,
        tau_min,
        tau_max,
        normal_selector,
        tangent_selector,
        weights,
        hessian,
        linear,
        constraint,
        lower,
        upper,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpOptions {
    pub max_iter: usize,
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub tol_relative: f64,
    /// Previous `λ` to warm-start from.
    pub warm_start: Option<DVector<f64>>,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self { max_iter: 10_000, tol_primal: 1e-8, tol_dual: 1e-8, tol_relative: 1e-6, warm_start: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIterations,
    Unbounded,
}

/// A normalized internal-force direction and the diagnostics that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct InternalForceProfile {
    /// Unit-norm direction in `N(G)`.
    pub f0_star: ContactForceVector,
    pub lambda: DVector<f64>,
    /// Objective at `λ` before normalization.
    pub objective_value: f64,
    pub solve_time: Duration,
    pub status: QpStatus,
    pub iterations: usize,
}

/// Solves the internal-force QP and normalizes the optimal force.
pub fn solve_internal_qp(p: &QpProblem, opts: &QpOptions) -> Result<InternalForceProfile, QpError> {
    let start = Instant::now();
    for j in 0..p.tau_min.len() {
        if !(p.tau_min[j] <= 0.0 && 0.0 <= p.tau_max[j]) {
            return Err(QpError::OriginInfeasible { joint: j, min: p.tau_min[j], max: p.tau_max[j] });
        }
    }
    let settings = AdmmSettings {
        max_iter: opts.max_iter,
        // The row equilibration inside the solver keeps primal and dual
        // residuals on comparable scales, so one absolute tolerance serves both.
        eps_abs: opts.tol_primal.min(opts.tol_dual),
        eps_rel: opts.tol_relative,
        ..AdmmSettings::default()
    };
    let dense = p.as_dense();
    let sol = match &opts.warm_start {
        Some(l0) if l0.len() == p.k() => {
            let y0 = DVector::zeros(dense.a.nrows());
            admm::solve(&dense, &settings, Some((l0, &y0)))
        }
        _ => admm::solve(&dense, &settings, None),
    };
    let status = match sol.status {
        AdmmStatus::Solved => QpStatus::Optimal,
        AdmmStatus::MaxIterations => QpStatus::MaxIterations,
        AdmmStatus::PrimalInfeasible => QpStatus::Infeasible,
        AdmmStatus::DualInfeasible => QpStatus::Unbounded,
    };
    let lambda = sol.x;
    let objective_value = p.objective(&lambda);
    let f = p.force(&lambda);
    let norm = f.0.norm();
    if status != QpStatus::Unbounded && !(norm > 1e-12) {
        return Err(QpError::ZeroProfile);
    }
    let f0_star = ContactForceVector(if norm > 0.0 { f.0 / norm } else { f.0 });
    Ok(InternalForceProfile {
        f0_star,
        lambda,
        objective_value,
        solve_time: start.elapsed(),
        status,
        iterations: sol.iterations,
    })
}

/// Structured dump of a QP instance and its solution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QpDiagnostics {
    pub num_contacts: usize,
    pub num_joints: usize,
    pub nullity: usize,
    pub rank_g: usize,
    pub basis: Vec<Vec<f64>>,
    pub hessian: Vec<Vec<f64>>,
    pub linear: Vec<f64>,
    pub tau_min: Vec<f64>,
    pub tau_max: Vec<f64>,
    pub lambda: Vec<f64>,
    pub f0_star: Vec<f64>,
    pub joint_torques_per_unit: Vec<f64>,
    pub objective_value: f64,
    pub status: QpStatus,
    pub iterations: usize,
    pub solve_time_s: f64,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

impl QpDiagnostics {
    pub fn new(p: &QpProblem, profile: &InternalForceProfile) -> Self {
        Self {
            num_contacts: p.num_contacts(),
            num_joints: p.num_joints(),
            nullity: p.basis.k,
            rank_g: p.basis.rank,
            basis: rows(&p.basis.v),
            hessian: rows(&p.hessian),
            linear: p.linear.iter().copied().collect(),
            tau_min: p.tau_min.iter().copied().collect(),
            tau_max: p.tau_max.iter().copied().collect(),
            lambda: profile.lambda.iter().copied().collect(),
            f0_star: profile.f0_star.0.iter().copied().collect(),
            joint_torques_per_unit: (&p.jt * &profile.f0_star.0).iter().copied().collect(),
            objective_value: profile.objective_value,
            status: profile.status,
            iterations: profile.iterations,
            solve_time_s: profile.solve_time.as_secs_f64(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("diagnostics are plain data")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grasp_model::Contact;
    use crate::nullspace::{nullspace_basis, DEFAULT_RANK_TOL};
    use approx::assert_abs_diff_eq;
    use nalgebra::{Isometry3, Vector3};

    fn antipodal_model(tau: f64, lever: f64) -> (GraspModel, Vec<FingerChain>) {
        let contacts = vec![
            Contact::new(Vector3::new(0.03, 0.0, 0.0), -Vector3::x(), 0.5, 0, 0).unwrap(),
            Contact::new(Vector3::new(-0.03, 0.0, 0.0), Vector3::x(), 0.5, 1, 0).unwrap(),
        ];
        let chains: Vec<_> = contacts
            .iter()
            .enumerate()
            .map(|(id, c)| {
                let o = c.position - Vector3::z() * lever;
                FingerChain::serial(id, Isometry3::translation(o.x, o.y, o.z), &[lever], &[Vector3::z().cross(&c.normal)], &[0.0], &[(-tau, tau)])
                    .unwrap()
            })
            .collect();
        (GraspModel::new(contacts, &chains, Isometry3::identity()).unwrap(), chains)
    }

    #[test]
    fn trivial_nullspace_is_rejected() {
        let (model, chains) = antipodal_model(1.0, 0.05);
        let empty = NullspaceBasis { v: DMatrix::zeros(6, 0), k: 0, rank: 6, tolerance_used: 0.0 };
        assert_eq!(assemble_qp(&model, &empty, &chains).unwrap_err(), QpError::TrivialNullspace);
    }

    #[test]
    fn antipodal_objective_is_linear_in_squeeze() {
        // Along the squeeze both penalties vanish: objective = sqrt(2) λ.
        let (model, chains) = antipodal_model(1.0, 0.05);
        let basis = nullspace_basis(&model.g, DEFAULT_RANK_TOL).unwrap();
        let p = assemble_qp(&model, &basis, &chains).unwrap();
        assert_abs_diff_eq!(p.hessian[(0, 0)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.linear[0], -std::f64::consts::SQRT_2, epsilon = 1e-12);
        assert_eq!(p.num_inequality_rows(), 2 * 2 + 2);
    }

    #[test]
    fn antipodal_optimum_sits_on_torque_box() {
        let (model, chains) = antipodal_model(1.0, 0.05);
        let basis = nullspace_basis(&model.g, DEFAULT_RANK_TOL).unwrap();
        let p = assemble_qp(&model, &basis, &chains).unwrap();
        let prof = solve_internal_qp(&p, &QpOptions::default()).unwrap();
        assert_eq!(prof.status, QpStatus::Optimal);
        // Each joint torque = lever * λ / sqrt(2) = 1  ->  λ = sqrt(2) / 0.05
        assert_abs_diff_eq!(prof.lambda[0], std::f64::consts::SQRT_2 / 0.05, epsilon = 1e-7);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(prof.f0_star.0, DVector::from_vec(vec![s, 0.0, 0.0, s, 0.0, 0.0]), epsilon = 1e-12);
    }

    #[test]
    fn box_without_origin_is_rejected() {
        let (model, mut chains) = antipodal_model(1.0, 0.05);
        chains[0].joints[0].tau_min = 0.2;
        let basis = nullspace_basis(&model.g, DEFAULT_RANK_TOL).unwrap();
        let p = assemble_qp(&model, &basis, &chains).unwrap();
        assert!(matches!(solve_internal_qp(&p, &QpOptions::default()), Err(QpError::OriginInfeasible { joint: 0, .. })));
    }

    #[test]
    fn unbounded_when_box_does_not_limit_squeeze() {
        let (model, chains) = antipodal_model(1.0, 0.05);
        let basis = nullspace_basis(&model.g, DEFAULT_RANK_TOL).unwrap();
        let mut p = assemble_qp(&model, &basis, &chains).unwrap();
        p.constraint.view_mut((0, 0), (2, 1)).fill(0.0);
        let prof = solve_internal_qp(&p, &QpOptions::default()).unwrap();
        assert_eq!(prof.status, QpStatus::Unbounded);
    }

    #[test]
    fn diagnostics_dump_is_json() {
        let (model, chains) = antipodal_model(1.0, 0.05);
        let basis = nullspace_basis(&model.g, DEFAULT_RANK_TOL).unwrap();
        let p = assemble_qp(&model, &basis, &chains).unwrap();
        let prof = solve_internal_qp(&p, &QpOptions::default()).unwrap();
        let text = QpDiagnostics::new(&p, &prof).to_json();
        let back: QpDiagnostics = serde_json::from_str(&text).unwrap();
        assert_eq!(back.nullity, 1);
        assert_eq!(back.status, QpStatus::Optimal);
    }
}
