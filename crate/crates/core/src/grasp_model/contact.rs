use nalgebra::{DVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::GraspError;

/// Unit-length tolerance accepted by [`build_contact_frame`].
pub const NORMAL_TOLERANCE: f64 = 1e-6;

/// Builds a right-handed tangent frame `(t1, t2)` for a unit contact normal.
///
/// The coordinate axis least aligned with the normal is projected onto the
/// tangent plane and normalized to give `t1`; `t2 = n × t1`. Ties between
/// axes go to the lowest index, so `(0,0,1)` maps to `t1 = x`, `t2 = y`.
pub fn build_contact_frame(normal: &Vector3<f64>) -> Result<(Vector3<f64>, Vector3<f64>), GraspError> {
    let norm = normal.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > NORMAL_TOLERANCE {
        return Err(GraspError::NonUnitNormal { norm });
    }
    let n = normal / norm;
    let mut axis = 0;
    for i in 1..3 {
        if n[i].abs() < n[axis].abs() {
            axis = i;
        }
    }
    let e = Vector3::ith(axis, 1.0);
    let t1 = (e - n * n.dot(&e)).normalize();
    let t2 = n.cross(&t1);
    Ok((t1, t2))
}

/// A hard-finger point contact: one normal and two tangential force
/// components, no torsional moment.
///
/// `position` and `normal` are expressed in the hand base frame, the same
/// frame the finger chains live in. The normal points into the object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub position: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub tangent1: Vector3<f64>,
    pub tangent2: Vector3<f64>,
    pub mu: f64,
    pub finger_id: usize,
    pub phalanx_id: usize,
}

impl Contact {
    /// Creates a contact, deriving the tangent frame from the normal.
    ///
    /// Normals within [`NORMAL_TOLERANCE`] of unit length are renormalized
    /// so the stored frame is orthonormal to machine precision.
    pub fn new(
        position: Vector3<f64>,
        normal: Vector3<f64>,
        mu: f64,
        finger_id: usize,
        phalanx_id: usize,
    ) -> Result<Self, GraspError> {
        if !(mu >= 0.0) {
            return Err(GraspError::NegativeFriction { mu });
        }
        if !position.iter().all(|x| x.is_finite()) {
            return Err(GraspError::NonFinite);
        }
        let (tangent1, tangent2) = build_contact_frame(&normal)?;
        Ok(Self {
            position,
            normal: normal.normalize(),
            tangent1,
            tangent2,
            mu,
            finger_id,
            phalanx_id,
        })
    }

    /// Direction of stacked component `k` (0 = normal, 1 = t1, 2 = t2).
    pub fn direction(&self, k: usize) -> Vector3<f64> {
        match k {
            0 => self.normal,
            1 => self.tangent1,
            2 => self.tangent2,
            _ => panic!("hard-finger contacts have three force components, got index {k}"),
        }
    }

    /// Local `[n, t1, t2]` components of a base-frame vector.
    pub fn to_local(&self, v: &Vector3<f64>) -> Vector3<f64> {
        Vector3::new(self.normal.dot(v), self.tangent1.dot(v), self.tangent2.dot(v))
    }

    /// Base-frame vector from local `[n, t1, t2]` components.
    pub fn to_base(&self, local: &Vector3<f64>) -> Vector3<f64> {
        self.normal * local[0] + self.tangent1 * local[1] + self.tangent2 * local[2]
    }
}

/// Stacked contact forces `[f_n1, f_t1_1, f_t2_1, f_n2, ...]` in newtons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactForceVector(pub DVector<f64>);

impl ContactForceVector {
    pub fn zeros(num_contacts: usize) -> Self {
        Self(DVector::zeros(3 * num_contacts))
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(DVector::from_vec(values))
    }

    pub fn num_contacts(&self) -> usize {
        self.0.len() / 3
    }

    pub fn normal(&self, i: usize) -> f64 {
        self.0[3 * i]
    }

    pub fn tangential(&self, i: usize) -> Vector2<f64> {
        Vector2::new(self.0[3 * i + 1], self.0[3 * i + 2])
    }

    pub fn local(&self, i: usize) -> Vector3<f64> {
        Vector3::new(self.0[3 * i], self.0[3 * i + 1], self.0[3 * i + 2])
    }

    pub fn set_local(&mut self, i: usize, f: &Vector3<f64>) {
        self.0.fixed_rows_mut::<3>(3 * i).copy_from(f);
    }

    pub fn normals(&self) -> Vec<f64> {
        (0..self.num_contacts()).map(|i| self.normal(i)).collect()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }
}

impl From<DVector<f64>> for ContactForceVector {
    fn from(v: DVector<f64>) -> Self {
        Self(v)
    }
}

/// Coulomb cone margin `mu_i f_n,i - |f_t,i|` per contact.
///
/// Positive is inside the cone, zero on the boundary, negative means the
/// tangential demand exceeds what friction can hold. Negative normal
/// forces are reported through a negative margin rather than rejected.
pub fn cone_margin(f: &ContactForceVector, contacts: &[Contact]) -> Result<Vec<f64>, GraspError> {
    if f.0.len() != 3 * contacts.len() {
        return Err(GraspError::DimensionMismatch {
            expected: 3 * contacts.len(),
            found: f.0.len(),
        });
    }
    Ok(contacts
        .iter()
        .enumerate()
        .map(|(i, c)| c.mu * f.normal(i) - f.tangential(i).norm())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn check_frame(n: &Vector3<f64>) {
        let (t1, t2) = build_contact_frame(n).unwrap();
        let n = n.normalize();
        // Gram matrix of [n t1 t2] must be the identity, determinant +1.
        let m = nalgebra::Matrix3::from_columns(&[n, t1, t2]);
        let gram = m.transpose() * m;
        assert_abs_diff_eq!(gram, nalgebra::Matrix3::identity(), epsilon = 1e-12);
        assert_abs_diff_eq!(m.determinant(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t1.cross(&t2), n, epsilon = 1e-12);
    }

    #[test]
    fn canonical_z_normal() {
        let (t1, t2) = build_contact_frame(&Vector3::z()).unwrap();
        assert_eq!(t1, Vector3::x());
        assert_eq!(t2, Vector3::y());
    }

    #[test]
    fn x_normal_is_orthonormal() {
        check_frame(&Vector3::x());
    }

    #[test]
    fn oblique_normal_gram_identity() {
        check_frame(&Vector3::new(0.6, 0.0, 0.8));
    }

    #[test]
    fn rejects_non_unit_normal() {
        let err = build_contact_frame(&Vector3::new(0.0, 0.0, 1.1)).unwrap_err();
        assert!(matches!(err, GraspError::NonUnitNormal { .. }));
        assert!(build_contact_frame(&Vector3::zeros()).is_err());
    }

    #[test]
    fn rejects_negative_mu() {
        let err = Contact::new(Vector3::zeros(), Vector3::z(), -0.1, 0, 0).unwrap_err();
        assert!(matches!(err, GraspError::NegativeFriction { .. }));
    }

    #[test]
    fn margin_without_tangential_load() {
        let c = Contact::new(Vector3::zeros(), Vector3::z(), 0.5, 0, 0).unwrap();
        let f = ContactForceVector::from_vec(vec![10.0, 0.0, 0.0]);
        assert_abs_diff_eq!(cone_margin(&f, &[c]).unwrap()[0], 5.0, epsilon = 1e-15);
    }

    #[test]
    fn margin_on_cone_boundary() {
        let c = Contact::new(Vector3::zeros(), Vector3::z(), 0.5, 0, 0).unwrap();
        let f = ContactForceVector::from_vec(vec![8.0, 4.0, 0.0]);
        assert_abs_diff_eq!(cone_margin(&f, &[c]).unwrap()[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn margin_negative_normal_is_reported() {
        let c = Contact::new(Vector3::zeros(), Vector3::z(), 0.5, 0, 0).unwrap();
        let f = ContactForceVector::from_vec(vec![-2.0, 0.0, 0.0]);
        assert!(cone_margin(&f, &[c]).unwrap()[0] < 0.0);
    }

    #[test]
    fn margin_dimension_mismatch() {
        let c = Contact::new(Vector3::zeros(), Vector3::z(), 0.5, 0, 0).unwrap();
        let f = ContactForceVector::from_vec(vec![1.0, 0.0]);
        assert!(matches!(
            cone_margin(&f, &[c]),
            Err(GraspError::DimensionMismatch { .. })
        ));
    }
}
