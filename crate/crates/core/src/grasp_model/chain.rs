use nalgebra::{Isometry3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::GraspError;

/// A revolute joint of a finger.
///
/// `axis` and `origin` are expressed in the parent link frame (the chain
/// base frame for the first joint).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevoluteJoint {
    pub axis: Unit<Vector3<f64>>,
    pub origin: Vector3<f64>,
    /// Joint angle in radians.
    pub angle: f64,
    pub tau_min: f64,
    pub tau_max: f64,
}

/// Serial chain of revolute joints; link `j` (phalanx `j`) is carried by joint `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerChain {
    pub id: usize,
    pub base: Isometry3<f64>,
    pub joints: Vec<RevoluteJoint>,
    pub link_lengths: Vec<f64>,
}

impl FingerChain {
    /// Builds a serial finger whose links extend along their local x axis:
    /// joint `j + 1` sits at `(link_lengths[j], 0, 0)` in link `j`.
    pub fn serial(
        id: usize,
        base: Isometry3<f64>,
        link_lengths: &[f64],
        axes: &[Vector3<f64>],
        angles: &[f64],
        tau_limits: &[(f64, f64)],
    ) -> Result<Self, GraspError> {
        let n = link_lengths.len();
        if axes.len() != n || angles.len() != n || tau_limits.len() != n {
            return Err(GraspError::ChainShape {
                finger: id,
                detail: format!(
                    "{} links but {} axes, {} angles, {} torque limits",
                    n,
                    axes.len(),
                    angles.len(),
                    tau_limits.len()
                ),
            });
        }
        let mut joints = Vec::with_capacity(n);
        for j in 0..n {
            let axis_norm = axes[j].norm();
            if (axis_norm - 1.0).abs() > 1e-9 {
                return Err(GraspError::NonUnitAxis {
                    finger: id,
                    joint: j,
                    norm: axis_norm,
                });
            }
            let (lo, hi) = tau_limits[j];
            if !(lo <= hi) {
                return Err(GraspError::TorqueLimits { finger: id, joint: j, min: lo, max: hi });
            }
            let origin = if j == 0 {
                Vector3::zeros()
            } else {
                Vector3::new(link_lengths[j - 1], 0.0, 0.0)
            };
            joints.push(RevoluteJoint {
                axis: Unit::new_unchecked(axes[j] / axis_norm),
                origin,
                angle: angles[j],
                tau_min: lo,
                tau_max: hi,
            });
        }
        Ok(Self { id, base, joints, link_lengths: link_lengths.to_vec() })
    }

    pub fn num_joints(&self) -> usize {
        self.joints.len()
    }

    pub fn angles(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.angle).collect()
    }

    pub fn set_angles(&mut self, angles: &[f64]) {
        for (j, q) in self.joints.iter_mut().zip(angles) {
            j.angle = *q;
        }
    }

    /// Base-frame pose of every link frame at the current angles.
    pub fn link_frames(&self) -> Vec<Isometry3<f64>> {
        let mut frames = Vec::with_capacity(self.joints.len());
        let mut current = self.base;
        for joint in &self.joints {
            current = current
                * Translation3::from(joint.origin)
                * UnitQuaternion::from_axis_angle(&joint.axis, joint.angle);
            frames.push(current);
        }
        frames
    }

    /// Base-frame origin and axis of every joint.
    pub fn joint_origins_and_axes(&self) -> Vec<(Vector3<f64>, Vector3<f64>)> {
        self.link_frames()
            .iter()
            .zip(&self.joints)
            .map(|(frame, joint)| (frame.translation.vector, frame.rotation * joint.axis.into_inner()))
            .collect()
    }

    /// Distal tip of the chain in the base frame.
    pub fn tip(&self) -> Vector3<f64> {
        match (self.link_frames().last(), self.link_lengths.last()) {
            (Some(frame), Some(len)) => frame.transform_point(&Vector3::new(*len, 0.0, 0.0).into()).coords,
            _ => self.base.translation.vector,
        }
    }

    pub fn validate(&self) -> Result<(), GraspError> {
        for (j, joint) in self.joints.iter().enumerate() {
            if !(joint.tau_min <= joint.tau_max) {
                return Err(GraspError::TorqueLimits {
                    finger: self.id,
                    joint: j,
                    min: joint.tau_min,
                    max: joint.tau_max,
                });
            }
            let norm = joint.axis.norm();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(GraspError::NonUnitAxis { finger: self.id, joint: j, norm });
            }
        }
        Ok(())
    }
}
