//! Kinematic model of a 6-revolute-joint arm (UR10e-like).
//!
//! Forward kinematics over a Denavit-Hartenberg table, saturated first-order
//! joint tracking, and quaternion orientation-error geometry. Pure functions
//! over value types; no shared mutable state.

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NUM_JOINTS: usize = 6;

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("non-finite joint value at index {0}")]
    NonFiniteJoint(usize),
    #[error("time step must be positive, got {0}")]
    NonPositiveTimestep(f64),
    #[error("quaternion norm {norm} departs from 1 by more than {tol}")]
    NonUnitQuaternion { norm: f64, tol: f64 },
    #[error("arm model invalid: {0}")]
    InvalidModel(String),
}

/// Six joint angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointVector(pub [f64; NUM_JOINTS]);

impl JointVector {
    pub fn zeros() -> Self {
        JointVector([0.0; NUM_JOINTS])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|q| q.is_finite())
    }

    /// Index of the first non-finite entry, if any.
    fn first_non_finite(&self) -> Option<usize> {
        self.0.iter().position(|q| !q.is_finite())
    }
}

impl std::ops::Index<usize> for JointVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for JointVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Per-joint position range and velocity cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    pub pos_min: [f64; NUM_JOINTS],
    pub pos_max: [f64; NUM_JOINTS],
    pub vel_max: [f64; NUM_JOINTS],
}

impl JointLimits {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        for i in 0..NUM_JOINTS {
            if !(self.pos_min[i] < self.pos_max[i]) {
                return Err(KinematicsError::InvalidModel(format!(
                    "joint {i}: pos_min {} must be below pos_max {}",
                    self.pos_min[i], self.pos_max[i]
                )));
            }
            if !(self.vel_max[i] > 0.0) || !self.vel_max[i].is_finite() {
                return Err(KinematicsError::InvalidModel(format!(
                    "joint {i}: vel_max {} must be positive and finite",
                    self.vel_max[i]
                )));
            }
        }
        Ok(())
    }

    pub fn clamp_position(&self, i: usize, q: f64) -> f64 {
        q.clamp(self.pos_min[i], self.pos_max[i])
    }
}

/// One Denavit-Hartenberg row: link length `a` (m), offset `d` (m),
/// twist `alpha` (rad), and a constant joint-angle offset (rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DhRow {
    pub a: f64,
    pub d: f64,
    pub alpha: f64,
    #[serde(default)]
    pub theta_offset: f64,
}

impl DhRow {
    /// Joint transform at angle `q`: Rz(q + offset) * Tz(d) * Tx(a) * Rx(alpha).
    pub fn transform(&self, q: f64) -> Isometry3<f64> {
        let rz = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), q + self.theta_offset);
        let rx = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), self.alpha);
        Isometry3::from_parts(Translation3::new(0.0, 0.0, self.d), rz)
            * Isometry3::from_parts(Translation3::new(self.a, 0.0, 0.0), rx)
    }
}

/// End-effector pose: position in meters and a unit orientation quaternion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EePose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

/// Six DH rows, a base frame, the home configuration, and joint limits.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmModel {
    dh_rows: [DhRow; NUM_JOINTS],
    base_frame: Isometry3<f64>,
    q_default: JointVector,
    limits: JointLimits,
}

impl ArmModel {
    pub fn new(
        dh_rows: [DhRow; NUM_JOINTS],
        base_frame: Isometry3<f64>,
        q_default: JointVector,
        limits: JointLimits,
    ) -> Result<Self, KinematicsError> {
        limits.validate()?;
        if let Some(i) = q_default.first_non_finite() {
            return Err(KinematicsError::NonFiniteJoint(i));
        }
        for (i, row) in dh_rows.iter().enumerate() {
            if ![row.a, row.d, row.alpha, row.theta_offset]
                .iter()
                .all(|v| v.is_finite())
            {
                return Err(KinematicsError::InvalidModel(format!(
                    "DH row {i} has non-finite entries"
                )));
            }
        }
        let rot = base_frame.rotation.to_rotation_matrix();
        if (rot.matrix().determinant() - 1.0).abs() > 1e-9 {
            return Err(KinematicsError::InvalidModel(
                "base frame rotation is not proper".into(),
            ));
        }
        Ok(ArmModel {
            dh_rows,
            base_frame,
            q_default,
            limits,
        })
    }

    pub fn dh_rows(&self) -> &[DhRow; NUM_JOINTS] {
        &self.dh_rows
    }

    pub fn base_frame(&self) -> &Isometry3<f64> {
        &self.base_frame
    }

    pub fn q_default(&self) -> JointVector {
        self.q_default
    }

    pub fn limits(&self) -> &JointLimits {
        &self.limits
    }

    /// Conservative reach bound: sum of |a_i| + |d_i| around the base origin.
    pub fn reach_radius(&self) -> f64 {
        self.dh_rows.iter().map(|r| r.a.abs() + r.d.abs()).sum()
    }

    pub fn base_origin(&self) -> Vector3<f64> {
        self.base_frame.translation.vector
    }
}

/// Tool pose as the ordered product of the base frame and the six DH
/// joint transforms evaluated at `q`.
pub fn forward_kinematics(model: &ArmModel, q: &JointVector) -> Result<EePose, KinematicsError> {
    if let Some(i) = q.first_non_finite() {
        return Err(KinematicsError::NonFiniteJoint(i));
    }
    let mut pose = *model.base_frame();
    for (row, &angle) in model.dh_rows().iter().zip(q.0.iter()) {
        pose *= row.transform(angle);
    }
    Ok(EePose {
        position: pose.translation.vector,
        orientation: pose.rotation,
    })
}

/// First-order saturated tracking: move each joint toward `q_target`,
/// stepping at most `vel_max * dt`, then clamp to the position range.
/// Returns the new configuration and the realized joint velocities.
pub fn track_joint_target(
    q: &JointVector,
    q_target: &JointVector,
    limits: &JointLimits,
    dt: f64,
) -> Result<(JointVector, [f64; NUM_JOINTS]), KinematicsError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(KinematicsError::NonPositiveTimestep(dt));
    }
    if let Some(i) = q.first_non_finite() {
        return Err(KinematicsError::NonFiniteJoint(i));
    }
    if let Some(i) = q_target.first_non_finite() {
        return Err(KinematicsError::NonFiniteJoint(i));
    }
    let mut q_next = *q;
    let mut qdot = [0.0; NUM_JOINTS];
    for i in 0..NUM_JOINTS {
        let max_step = limits.vel_max[i] * dt;
        let step = (q_target[i] - q[i]).clamp(-max_step, max_step);
        q_next[i] = limits.clamp_position(i, q[i] + step);
        qdot[i] = (q_next[i] - q[i]) / dt;
    }
    Ok((q_next, qdot))
}

/// Geodesic angle between two unit quaternions: 2*acos(|<a,b>|), in [0, pi].
/// Symmetric in its arguments and invariant to quaternion sign flips.
pub fn orientation_error(
    a: &UnitQuaternion<f64>,
    b: &UnitQuaternion<f64>,
) -> Result<f64, KinematicsError> {
    const TOL: f64 = 1e-6;
    for quat in [a, b] {
        let norm = quat.as_ref().norm();
        if (norm - 1.0).abs() > TOL {
            return Err(KinematicsError::NonUnitQuaternion { norm, tol: TOL });
        }
    }
    let dot = a.coords.dot(&b.coords).abs().min(1.0);
    Ok(2.0 * dot.acos())
}

/// Wrap an angle into (-pi, pi] for display. Joints are unbounded internally.
pub fn wrap_angle(q: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut w = q.rem_euclid(two_pi);
    if w > std::f64::consts::PI {
        w -= two_pi;
    }
    w
}
