//! Grasp matrix, hand Jacobian and friction-cone machinery for hard-finger
//! point contacts.
//!
//! Contact forces are stacked per contact as `[f_n, f_t1, f_t2]` in the
//! contact's own frame. The grasp matrix `G` (6 × 3n) maps them to the net
//! object wrench `[force; torque]` about the object frame origin, expressed
//! in object-frame axes. The hand Jacobian `J` (3n × m) maps joint rates to
//! contact-point velocities expressed in the contact frames, so that
//! `tau = J^T f_c` holds for the same stacked force vector.

mod chain;
mod contact;

pub use chain::{FingerChain, RevoluteJoint};
pub use contact::{build_contact_frame, cone_margin, Contact, ContactForceVector, NORMAL_TOLERANCE};

use nalgebra::{DMatrix, DVector, Isometry3, Vector3, Vector6};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraspError {
    #[error("contact normal is not unit length (|n| = {norm})")]
    NonUnitNormal { norm: f64 },
    #[error("friction coefficient must be non-negative, got {mu}")]
    NegativeFriction { mu: f64 },
    #[error("contact set is empty")]
    EmptyContactSet,
    #[error("contact references unknown finger {finger}")]
    UnknownFinger { finger: usize },
    #[error("finger {finger} has no phalanx {phalanx}")]
    UnknownPhalanx { finger: usize, phalanx: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("finger {finger} joint {joint}: tau_min {min} > tau_max {max}")]
    TorqueLimits { finger: usize, joint: usize, min: f64, max: f64 },
    #[error("finger {finger} joint {joint}: axis is not unit length (|a| = {norm})")]
    NonUnitAxis { finger: usize, joint: usize, norm: f64 },
    #[error("finger {finger}: {detail}")]
    ChainShape { finger: usize, detail: String },
    #[error("duplicate finger id {finger}")]
    DuplicateFinger { finger: usize },
    #[error("non-finite geometry")]
    NonFinite,
}

/// Builds the 6 × 3n grasp matrix.
///
/// The column for direction `d` of contact `i` is `[d; (p_i - c) × d]`
/// rotated into the object frame, with `c` the object frame origin.
pub fn build_grasp_matrix(contacts: &[Contact], object_frame: &Isometry3<f64>) -> Result<DMatrix<f64>, GraspError> {
    if contacts.is_empty() {
        return Err(GraspError::EmptyContactSet);
    }
    let center = object_frame.translation.vector;
    let to_object = object_frame.rotation.inverse();
    let mut g = DMatrix::zeros(6, 3 * contacts.len());
    for (i, c) in contacts.iter().enumerate() {
        let arm = c.position - center;
        for k in 0..3 {
            let d = c.direction(k);
            let force = to_object * d;
            let torque = to_object * arm.cross(&d);
            let mut col = g.column_mut(3 * i + k);
            col.fixed_rows_mut::<3>(0).copy_from(&force);
            col.fixed_rows_mut::<3>(3).copy_from(&torque);
        }
    }
    Ok(g)
}

/// Builds the 3n × m hand Jacobian for `contacts` carried by `chains`.
///
/// Joint columns follow the order of `chains`, then joint order within each
/// chain. A contact on phalanx `p` only sees joints `0..=p` of its finger;
/// revolute columns are `a_j × (p_i - o_j)` rotated into the contact frame.
pub fn build_hand_jacobian(chains: &[FingerChain], contacts: &[Contact]) -> Result<DMatrix<f64>, GraspError> {
    let m: usize = chains.iter().map(FingerChain::num_joints).sum();
    let mut offsets = Vec::with_capacity(chains.len());
    let mut kinematics = Vec::with_capacity(chains.len());
    let mut offset = 0;
    for chain in chains {
        offsets.push(offset);
        offset += chain.num_joints();
        kinematics.push(chain.joint_origins_and_axes());
    }

    let mut jac = DMatrix::zeros(3 * contacts.len(), m);
    for (i, c) in contacts.iter().enumerate() {
        let ci = chains
            .iter()
            .position(|ch| ch.id == c.finger_id)
            .ok_or(GraspError::UnknownFinger { finger: c.finger_id })?;
        let joints = &kinematics[ci];
        if c.phalanx_id >= joints.len() {
            return Err(GraspError::UnknownPhalanx {
                finger: c.finger_id,
                phalanx: c.phalanx_id,
            });
        }
        for (j, (origin, axis)) in joints.iter().enumerate().take(c.phalanx_id + 1) {
            let v = axis.cross(&(c.position - origin));
            let local = c.to_local(&v);
            jac.fixed_view_mut::<3, 1>(3 * i, offsets[ci] + j).copy_from(&local);
        }
    }
    Ok(jac)
}

/// Net object wrench `G f` (newtons, newton-meters).
pub fn object_wrench(g: &DMatrix<f64>, f: &ContactForceVector) -> Result<Vector6<f64>, GraspError> {
    if g.nrows() != 6 || g.ncols() != f.0.len() {
        return Err(GraspError::DimensionMismatch {
            expected: g.ncols(),
            found: f.0.len(),
        });
    }
    let w = g * &f.0;
    Ok(Vector6::from_iterator(w.iter().copied()))
}

/// Grasp matrix, hand Jacobian and the contact set they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct GraspModel {
    pub contacts: Vec<Contact>,
    pub object_frame: Isometry3<f64>,
    pub g: DMatrix<f64>,
    pub j: DMatrix<f64>,
}

impl GraspModel {
    /// Builds a model; contacts are stably reordered by finger id so the
    /// stacked vector layout is reproducible.
    pub fn new(
        mut contacts: Vec<Contact>,
        chains: &[FingerChain],
        object_frame: Isometry3<f64>,
    ) -> Result<Self, GraspError> {
        for (i, a) in chains.iter().enumerate() {
            if chains[..i].iter().any(|b| b.id == a.id) {
                return Err(GraspError::DuplicateFinger { finger: a.id });
            }
            a.validate()?;
        }
        contacts.sort_by_key(|c| c.finger_id);
        let g = build_grasp_matrix(&contacts, &object_frame)?;
        let j = build_hand_jacobian(chains, &contacts)?;
        Ok(Self { contacts, object_frame, g, j })
    }

    pub fn num_contacts(&self) -> usize {
        self.contacts.len()
    }

    pub fn num_joints(&self) -> usize {
        self.j.ncols()
    }

    pub fn wrench(&self, f: &ContactForceVector) -> Result<Vector6<f64>, GraspError> {
        object_wrench(&self.g, f)
    }

    /// Joint torques `J^T f`.
    pub fn joint_torques(&self, f: &ContactForceVector) -> Result<DVector<f64>, GraspError> {
        if f.0.len() != self.j.nrows() {
            return Err(GraspError::DimensionMismatch {
                expected: self.j.nrows(),
                found: f.0.len(),
            });
        }
        Ok(self.j.tr_mul(&f.0))
    }

    pub fn cone_margins(&self, f: &ContactForceVector) -> Result<Vec<f64>, GraspError> {
        cone_margin(f, &self.contacts)
    }

    /// Base-frame force exerted at contact `i`.
    pub fn contact_force_world(&self, f: &ContactForceVector, i: usize) -> Vector3<f64> {
        self.contacts[i].to_base(&f.local(i))
    }
}

/// Torque limits of `chains` stacked in Jacobian column order.
pub fn torque_limits(chains: &[FingerChain]) -> (DVector<f64>, DVector<f64>) {
    let lo = chains.iter().flat_map(|c| c.joints.iter().map(|j| j.tau_min));
    let hi = chains.iter().flat_map(|c| c.joints.iter().map(|j| j.tau_max));
    (DVector::from_iterator(chains.iter().map(|c| c.num_joints()).sum(), lo),
     DVector::from_iterator(chains.iter().map(|c| c.num_joints()).sum(), hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn antipodal(r: f64) -> Vec<Contact> {
        vec![
            Contact::new(Vector3::new(r, 0.0, 0.0), -Vector3::x(), 0.5, 0, 0).unwrap(),
            Contact::new(Vector3::new(-r, 0.0, 0.0), Vector3::x(), 0.5, 1, 0).unwrap(),
        ]
    }

    #[test]
    fn antipodal_squeeze_has_zero_wrench() {
        let g = build_grasp_matrix(&antipodal(0.03), &Isometry3::identity()).unwrap();
        let f = ContactForceVector::from_vec(vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_abs_diff_eq!(object_wrench(&g, &f).unwrap(), Vector6::zeros(), epsilon = 1e-15);
    }

    #[test]
    fn single_offset_contact_columns() {
        let c = Contact::new(Vector3::new(0.0, 0.0, 0.1), -Vector3::z(), 0.5, 0, 0).unwrap();
        let g = build_grasp_matrix(std::slice::from_ref(&c), &Isometry3::identity()).unwrap();
        // normal column: force (0,0,-1), torque (0,0,0.1) x (0,0,-1) = 0
        let normal = g.column(0);
        assert_abs_diff_eq!(normal.rows(0, 3).into_owned(), DVector::from_vec(vec![0.0, 0.0, -1.0]), epsilon = 1e-15);
        assert_abs_diff_eq!(normal.rows(3, 3).norm(), 0.0, epsilon = 1e-15);
        // tangent columns carry a moment arm: (0,0,0.1) x t
        for k in 1..3 {
            let t = c.direction(k);
            let expected = Vector3::new(0.0, 0.0, 0.1).cross(&t);
            assert_abs_diff_eq!(g.fixed_view::<3, 1>(3, k).into_owned(), expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn empty_contact_set() {
        assert_eq!(
            build_grasp_matrix(&[], &Isometry3::identity()).unwrap_err(),
            GraspError::EmptyContactSet
        );
    }

    #[test]
    fn zero_force_zero_wrench() {
        let g = build_grasp_matrix(&antipodal(0.05), &Isometry3::identity()).unwrap();
        let w = object_wrench(&g, &ContactForceVector::zeros(2)).unwrap();
        assert_eq!(w, Vector6::zeros());
    }

    #[test]
    fn wrench_dimension_mismatch() {
        let g = build_grasp_matrix(&antipodal(0.05), &Isometry3::identity()).unwrap();
        assert!(matches!(
            object_wrench(&g, &ContactForceVector::zeros(3)),
            Err(GraspError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn single_joint_lever_arm() {
        // Link along +z, contact at lever arm L, normal along +x perpendicular to the link.
        let l = 0.07;
        let n = Vector3::x();
        let link = Vector3::z();
        let axis = link.cross(&n);
        let chain = FingerChain::serial(0, Isometry3::identity(), &[0.1], &[axis], &[0.0], &[(-1.0, 1.0)]).unwrap();
        let c = Contact::new(link * l, n, 0.5, 0, 0).unwrap();
        let j = build_hand_jacobian(&[chain], &[c]).unwrap();
        let tau = j.tr_mul(&DVector::from_vec(vec![1.0, 0.0, 0.0]));
        assert_abs_diff_eq!(tau[0], l, epsilon = 1e-15);
    }

    #[test]
    fn distal_joints_do_not_move_proximal_contact() {
        let chain = FingerChain::serial(
            4,
            Isometry3::identity(),
            &[0.05, 0.04, 0.03],
            &[Vector3::z(); 3],
            &[0.3, 0.4, 0.5],
            &[(-1.0, 1.0); 3],
        )
        .unwrap();
        let frames = chain.link_frames();
        let p = frames[1].transform_point(&Vector3::new(0.02, 0.005, 0.0).into()).coords;
        let c = Contact::new(p, Vector3::y(), 0.5, 4, 1).unwrap();
        let j = build_hand_jacobian(&[chain], &[c]).unwrap();
        assert!(j.column(0).norm() > 0.0);
        assert!(j.column(1).norm() > 0.0);
        assert_eq!(j.column(2).norm(), 0.0);
    }

    #[test]
    fn unknown_finger_and_phalanx() {
        let chain = FingerChain::serial(0, Isometry3::identity(), &[0.1], &[Vector3::z()], &[0.0], &[(-1.0, 1.0)]).unwrap();
        let c = Contact::new(Vector3::x(), Vector3::y(), 0.5, 9, 0).unwrap();
        assert_eq!(
            build_hand_jacobian(std::slice::from_ref(&chain), &[c]).unwrap_err(),
            GraspError::UnknownFinger { finger: 9 }
        );
        let c = Contact::new(Vector3::x(), Vector3::y(), 0.5, 0, 2).unwrap();
        assert_eq!(
            build_hand_jacobian(&[chain], &[c]).unwrap_err(),
            GraspError::UnknownPhalanx { finger: 0, phalanx: 2 }
        );
    }

    #[test]
    fn model_orders_contacts_by_finger() {
        let mut contacts = antipodal(0.03);
        contacts.reverse();
        let chains: Vec<_> = (0..2)
            .map(|id| FingerChain::serial(id, Isometry3::identity(), &[0.1], &[Vector3::z()], &[0.0], &[(-1.0, 1.0)]).unwrap())
            .collect();
        let model = GraspModel::new(contacts, &chains, Isometry3::identity()).unwrap();
        assert_eq!(model.contacts[0].finger_id, 0);
        assert_eq!(model.contacts[1].finger_id, 1);
        assert_eq!(model.g.shape(), (6, 6));
        assert_eq!(model.j.shape(), (6, 2));
    }
}
