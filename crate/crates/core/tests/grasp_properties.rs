use nalgebra::{DVector, Isometry3, Translation3, UnitQuaternion, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rsc_core::grasp_model::{build_contact_frame, build_grasp_matrix, build_hand_jacobian, cone_margin, Contact, ContactForceVector, FingerChain};

fn unit(v: [f64; 3]) -> Option<Vector3<f64>> {
    let v = Vector3::from(v);
    (v.norm() > 1e-3).then(|| v.normalize())
}

fn chain(id: usize, base: [f64; 3], rpy: [f64; 3], lengths: &[f64], axes: &[Vector3<f64>], q: &[f64]) -> FingerChain {
    let base = Isometry3::from_parts(Translation3::from(Vector3::from(base)), UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2]));
    let limits = vec![(-5.0, 5.0); lengths.len()];
    FingerChain::serial(id, base, lengths, axes, q, &limits).unwrap()
}

/// Point `p` (base frame) moved rigidly with link `link` when the finger
/// angles change from their current values to `q`.
fn carried_point(chain: &FingerChain, link: usize, p: &Vector3<f64>, q: &[f64]) -> Vector3<f64> {
    let local = chain.link_frames()[link].inverse_transform_point(&(*p).into());
    let mut moved = chain.clone();
    moved.set_angles(q);
    moved.link_frames()[link].transform_point(&local).coords
}

fn axis_strategy() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-1.0..1.0f64)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    /// Columns of `J` match central differences of the contact velocity,
    /// projected on the contact frame, for points carried by their phalanx.
    #[test]
    fn jacobian_matches_finite_differences(
        q in prop::collection::vec(-1.5..1.5f64, 3),
        raw_axes in prop::collection::vec(axis_strategy(), 3),
        lengths in prop::collection::vec(0.02..0.06f64, 3),
        rpy in prop::array::uniform3(-3.0..3.0f64),
        offset in prop::array::uniform3(-0.01..0.01f64),
        normal in axis_strategy(),
        phalanx in 0usize..3,
    ) {
        let axes: Vec<Vector3<f64>> = raw_axes.iter().map(|a| unit(*a).unwrap_or_else(Vector3::z)).collect();
        let Some(n) = unit(normal) else { return Ok(()) };
        let ch = chain(4, [0.01, -0.02, 0.03], rpy, &lengths, &axes, &q);
        // Contact somewhere near the middle of the chosen phalanx.
        let frame = ch.link_frames()[phalanx];
        let p = frame.transform_point(&Vector3::new(0.5 * lengths[phalanx] + offset[0], offset[1], offset[2]).into()).coords;
        let c = Contact::new(p, n, 0.5, 4, phalanx).unwrap();
        let j = build_hand_jacobian(std::slice::from_ref(&ch), std::slice::from_ref(&c)).unwrap();
        let h = 1e-6;
        for col in 0..3 {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[col] += h;
            qm[col] -= h;
            let v = (carried_point(&ch, phalanx, &p, &qp) - carried_point(&ch, phalanx, &p, &qm)) / (2.0 * h);
            let expected = [n.dot(&v), c.tangent1.dot(&v), c.tangent2.dot(&v)];
            for k in 0..3 {
                prop_assert!((j[(k, col)] - expected[k]).abs() < 1e-7, "J[{k},{col}] = {} vs {}", j[(k, col)], expected[k]);
            }
        }
    }

    /// `G f` equals the summed world forces and their moments about the
    /// object origin, expressed in the object frame.
    #[test]
    fn grasp_matrix_sums_forces_and_moments(
        points in prop::collection::vec(prop::array::uniform3(-0.1..0.1f64), 1..5),
        normals in prop::collection::vec(axis_strategy(), 5),
        forces in prop::collection::vec(-5.0..5.0f64, 15),
        origin in prop::array::uniform3(-0.05..0.05f64),
        rpy in prop::array::uniform3(-3.0..3.0f64),
    ) {
        let mut contacts = Vec::new();
        for (i, p) in points.iter().enumerate() {
            let Some(n) = unit(normals[i]) else { return Ok(()) };
            contacts.push(Contact::new(Vector3::from(*p), n, 0.5, i, 0).unwrap());
        }
        let nc = contacts.len();
        let frame = Isometry3::from_parts(Translation3::from(Vector3::from(origin)), UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2]));
        let g = build_grasp_matrix(&contacts, &frame).unwrap();
        let f = DVector::from_column_slice(&forces[..3 * nc]);
        let w = &g * &f;
        let mut force = Vector3::zeros();
        let mut moment = Vector3::zeros();
        for (i, c) in contacts.iter().enumerate() {
            let fw = c.normal * f[3 * i] + c.tangent1 * f[3 * i + 1] + c.tangent2 * f[3 * i + 2];
            force += fw;
            moment += (c.position - Vector3::from(origin)).cross(&fw);
        }
        let r = frame.rotation.to_rotation_matrix();
        let (force, moment) = (r.transpose() * force, r.transpose() * moment);
        for k in 0..3 {
            prop_assert!((w[k] - force[k]).abs() < 1e-10);
            prop_assert!((w[3 + k] - moment[k]).abs() < 1e-10);
        }
    }

    /// Virtual work: `f · (J q̇) = (J^T f) · q̇`, and `J^T f` computed column
    /// by column from joint axes agrees with the matrix product.
    #[test]
    fn torque_map_is_jacobian_transpose(
        q in prop::collection::vec(-1.5..1.5f64, 2),
        f in prop::array::uniform3(-5.0..5.0f64),
        qdot in prop::array::uniform2(-1.0..1.0f64),
    ) {
        let ch = chain(0, [0.0; 3], [0.0; 3], &[0.05, 0.04], &[Vector3::z(), Vector3::z()], &q);
        let p = ch.tip() + Vector3::new(0.0, 0.0, 0.005);
        let c = Contact::new(p, Vector3::new(0.6, 0.0, 0.8), 0.5, 0, 1).unwrap();
        let j = build_hand_jacobian(std::slice::from_ref(&ch), std::slice::from_ref(&c)).unwrap();
        let fv = DVector::from_column_slice(&f);
        let qd = DVector::from_column_slice(&qdot);
        let lhs = fv.dot(&(&j * &qd));
        let rhs = j.tr_mul(&fv).dot(&qd);
        prop_assert!((lhs - rhs).abs() < 1e-12);
        let fw = c.normal * f[0] + c.tangent1 * f[1] + c.tangent2 * f[2];
        let tau = j.tr_mul(&fv);
        for (k, (o, a)) in ch.joint_origins_and_axes().iter().enumerate() {
            prop_assert!((tau[k] - a.dot(&(p - o).cross(&fw))).abs() < 1e-12);
        }
    }

    /// The cone margin is positively homogeneous of degree one.
    #[test]
    fn cone_margin_is_homogeneous(
        f in prop::collection::vec(-5.0..5.0f64, 6),
        mu in 0.0..1.5f64,
        s in 0.0..20.0f64,
    ) {
        let contacts = vec![
            Contact::new(Vector3::x() * 0.03, -Vector3::x(), mu, 0, 0).unwrap(),
            Contact::new(-Vector3::x() * 0.03, Vector3::x(), mu, 1, 0).unwrap(),
        ];
        let base = ContactForceVector::from_vec(f.clone());
        let scaled = ContactForceVector::from_vec(f.iter().map(|x| x * s).collect());
        let m0 = cone_margin(&base, &contacts).unwrap();
        let m1 = cone_margin(&scaled, &contacts).unwrap();
        for (a, b) in m0.iter().zip(&m1) {
            prop_assert!((b - s * a).abs() < 1e-9 * (1.0 + s * a.abs()));
        }
    }
}

#[test]
fn ten_thousand_random_frames_are_orthonormal_and_right_handed() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10_000 {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.norm() < 1e-6 {
            continue;
        }
        let n = v.normalize();
        let (t1, t2) = build_contact_frame(&n).unwrap();
        assert!((t1.norm() - 1.0).abs() < 1e-12);
        assert!((t2.norm() - 1.0).abs() < 1e-12);
        assert!(n.dot(&t1).abs() < 1e-12 && n.dot(&t2).abs() < 1e-12 && t1.dot(&t2).abs() < 1e-12);
        assert!((n.cross(&t1) - t2).norm() < 1e-12);
    }
}

#[test]
fn frames_on_coordinate_axes() {
    let (t1, t2) = build_contact_frame(&-Vector3::x()).unwrap();
    assert_eq!((t1, t2), (Vector3::y(), -Vector3::z()));
    let (t1, t2) = build_contact_frame(&Vector3::z()).unwrap();
    assert_eq!((t1, t2), (Vector3::x(), Vector3::y()));
}
