//! Serial chain model, forward kinematics and geometric Jacobians.
//!
//! The default model is the simplified loco-manipulation chain: a prismatic
//! base-height joint along world z, a revolute base-pitch joint about the
//! body y axis, then six revolute arm joints. The "world" of this module is
//! the robot's ground-level heading frame (x forward, y left, z up); the
//! planar base pose lives in the simulator.

use nalgebra::{DVector, Matrix6xX, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{rotation_log, Pose};

/// Joint vector of a chain. For the default model the order is
/// `(h, pitch, arm_1 .. arm_6)`.
pub type JointVector = DVector<f64>;

/// Index of the base-height joint in the default model.
pub const HEIGHT: usize = 0;
/// Index of the base-pitch joint in the default model.
pub const PITCH: usize = 1;
/// Number of actuated joints in the default model.
pub const DEFAULT_DOF: usize = 8;
/// Number of arm joints in the default model.
pub const ARM_DOF: usize = 6;

/// Arm-forward, tool-down-ish configuration of the nominal model used as the
/// default IK seed and posture reference.
pub fn ready_pose() -> JointVector {
    DVector::from_vec(vec![0.35, 0.0, 0.0, 0.3, -1.2, 1.2, 0.0, 0.0])
}

const NOMINAL_MODEL: &str = include_str!("../data/nominal_model.json");

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("unknown frame {0:?}")]
    UnknownFrame(Frame),
    #[error("expected {expected} joint values, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("model file: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Prismatic,
    Revolute,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: JointKind,
    /// Unit axis in the joint frame.
    pub axis: Vector3<f64>,
    /// Fixed transform from the previous joint frame (or world) to this joint.
    #[serde(default)]
    pub origin: Pose,
    pub lower: f64,
    pub upper: f64,
    pub max_velocity: f64,
}

impl Joint {
    fn motion(&self, q: f64) -> Pose {
        match self.kind {
            JointKind::Prismatic => Pose::from_translation(self.axis * q),
            JointKind::Revolute => Pose::from_axis_angle(self.axis, q),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraMount {
    /// Joint whose frame carries the camera.
    pub parent: usize,
    pub pose: Pose,
}

/// Frames addressable by FK and Jacobian queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    EndEffector,
    Camera,
    /// Frame of joint `i` after its motion.
    Joint(usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainModel {
    #[serde(default)]
    pub name: String,
    pub joints: Vec<Joint>,
    /// Tool frame relative to the last joint. Tool z is the approach axis,
    /// tool y the gripper closing axis.
    pub ee_offset: Pose,
    #[serde(default)]
    pub camera: Option<CameraMount>,
}

impl ChainModel {
    /// The shipped nominal loco-manipulation model (8 joints).
    pub fn nominal() -> Self {
        Self::from_json(NOMINAL_MODEL).expect("bundled model is valid")
    }

    pub fn from_json(s: &str) -> Result<Self, KinematicsError> {
        let mut m: ChainModel = serde_json::from_str(s)?;
        for j in &mut m.joints {
            let n = j.axis.norm();
            if n > 0.0 {
                j.axis /= n;
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, KinematicsError> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| KinematicsError::InvalidModel(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        if self.joints.is_empty() {
            return Err(KinematicsError::InvalidModel("no joints".into()));
        }
        for j in &self.joints {
            if !(j.lower < j.upper) {
                return Err(KinematicsError::InvalidModel(format!(
                    "joint {}: lower {} >= upper {}",
                    j.name, j.lower, j.upper
                )));
            }
            if (j.axis.norm() - 1.0).abs() > 1e-9 {
                return Err(KinematicsError::InvalidModel(format!("joint {}: zero axis", j.name)));
            }
            if !(j.max_velocity >= 0.0) {
                return Err(KinematicsError::InvalidModel(format!(
                    "joint {}: negative velocity limit",
                    j.name
                )));
            }
        }
        if let Some(cam) = &self.camera {
            if cam.parent >= self.joints.len() {
                return Err(KinematicsError::InvalidModel("camera parent out of range".into()));
            }
        }
        Ok(())
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn lower(&self) -> JointVector {
        DVector::from_iterator(self.dof(), self.joints.iter().map(|j| j.lower))
    }

    pub fn upper(&self) -> JointVector {
        DVector::from_iterator(self.dof(), self.joints.iter().map(|j| j.upper))
    }

    pub fn max_velocity(&self) -> JointVector {
        DVector::from_iterator(self.dof(), self.joints.iter().map(|j| j.max_velocity))
    }

    pub fn clamp(&self, q: &mut JointVector) {
        for (qi, j) in q.iter_mut().zip(&self.joints) {
            *qi = qi.clamp(j.lower, j.upper);
        }
    }

    /// Uniform sample inside the position limits.
    pub fn sample_configuration<R: Rng + ?Sized>(&self, rng: &mut R) -> JointVector {
        DVector::from_iterator(
            self.dof(),
            self.joints.iter().map(|j| rng.random_range(j.lower..j.upper)),
        )
    }

    pub fn within_limits(&self, q: &JointVector, slack: f64) -> bool {
        q.iter()
            .zip(&self.joints)
            .all(|(qi, j)| *qi >= j.lower - slack && *qi <= j.upper + slack)
    }

    /// Upper bound on end-effector displacement per unit of joint motion
    /// (1-norm): fixed link offsets plus prismatic travel, plus one.
    pub fn lipschitz_bound(&self) -> f64 {
        let links: f64 = self.joints.iter().map(|j| j.origin.translation.norm()).sum();
        let prismatic: f64 = self
            .joints
            .iter()
            .filter(|j| j.kind == JointKind::Prismatic)
            .map(|j| j.lower.abs().max(j.upper.abs()))
            .sum();
        links + prismatic + self.ee_offset.translation.norm() + 1.0
    }

    fn check(&self, q: &JointVector) -> Result<(), KinematicsError> {
        if q.len() != self.dof() {
            return Err(KinematicsError::Dimension {
                expected: self.dof(),
                actual: q.len(),
            });
        }
        Ok(())
    }

    /// World poses of every joint frame (after motion), in chain order.
    pub fn joint_frames(&self, q: &JointVector) -> Result<Vec<Pose>, KinematicsError> {
        self.check(q)?;
        let mut t = Pose::identity();
        let mut frames = Vec::with_capacity(self.dof());
        for (j, &qi) in self.joints.iter().zip(q.iter()) {
            t = t.compose(&j.origin).compose(&j.motion(qi));
            frames.push(t);
        }
        Ok(frames)
    }

    fn frame_from(&self, frames: &[Pose], frame: Frame) -> Result<(Pose, usize), KinematicsError> {
        match frame {
            Frame::EndEffector => {
                let last = frames.len() - 1;
                Ok((frames[last].compose(&self.ee_offset), last))
            }
            Frame::Camera => {
                let cam = self.camera.ok_or(KinematicsError::UnknownFrame(frame))?;
                Ok((frames[cam.parent].compose(&cam.pose), cam.parent))
            }
            Frame::Joint(i) if i < frames.len() => Ok((frames[i], i)),
            Frame::Joint(_) => Err(KinematicsError::UnknownFrame(frame)),
        }
    }

    pub fn forward_kinematics(&self, q: &JointVector, frame: Frame) -> Result<Pose, KinematicsError> {
        let frames = self.joint_frames(q)?;
        Ok(self.frame_from(&frames, frame)?.0)
    }

    /// 6×n geometric Jacobian of `frame`: rows 0..3 linear velocity of the
    /// frame origin, rows 3..6 angular velocity, both in the world frame.
    pub fn jacobian(&self, q: &JointVector, frame: Frame) -> Result<Matrix6xX<f64>, KinematicsError> {
        let frames = self.joint_frames(q)?;
        let (target, last) = self.frame_from(&frames, frame)?;
        let p = target.translation;
        let mut jac = Matrix6xX::zeros(self.dof());
        for (i, (joint, f)) in self.joints.iter().zip(&frames).enumerate().take(last + 1) {
            // Joint motion leaves its own axis fixed, so the post-motion frame
            // gives the same world axis as the pre-motion one.
            let axis = f.rotation * joint.axis;
            match joint.kind {
                JointKind::Prismatic => {
                    jac.fixed_view_mut::<3, 1>(0, i).copy_from(&axis);
                }
                JointKind::Revolute => {
                    let lin = axis.cross(&(p - f.translation));
                    jac.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
                    jac.fixed_view_mut::<3, 1>(3, i).copy_from(&axis);
                }
            }
        }
        Ok(jac)
    }
}

/// 6-vector pose error `(p_des - p, log(R_des R^T))` in the world frame.
pub fn pose_error(target: &Pose, current: &Pose) -> nalgebra::Vector6<f64> {
    let dp = target.translation - current.translation;
    let dr = rotation_log(&(target.rotation * current.rotation.transpose()));
    nalgebra::Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
}

/// Base references and arm command carried by a default-model joint vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseArmRefs {
    pub h_des: f64,
    pub pitch_des: f64,
    pub arm: [f64; ARM_DOF],
}

impl BaseArmRefs {
    pub fn to_joint_vector(&self) -> JointVector {
        let mut q = JointVector::zeros(DEFAULT_DOF);
        q[HEIGHT] = self.h_des;
        q[PITCH] = self.pitch_des;
        for (i, a) in self.arm.iter().enumerate() {
            q[2 + i] = *a;
        }
        q
    }
}

/// Splits a default-model joint vector into `(h_des, pitch_des, arm)`.
pub fn split_base_refs(q: &JointVector) -> Result<BaseArmRefs, KinematicsError> {
    if q.len() != DEFAULT_DOF {
        return Err(KinematicsError::Dimension {
            expected: DEFAULT_DOF,
            actual: q.len(),
        });
    }
    let mut arm = [0.0; ARM_DOF];
    arm.copy_from_slice(&q.as_slice()[2..]);
    Ok(BaseArmRefs {
        h_des: q[HEIGHT],
        pitch_des: q[PITCH],
        arm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::geometry::Vec3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn random_q(model: &ChainModel, rng: &mut impl Rng) -> JointVector {
        model.sample_configuration(rng)
    }

    // Central differences of FK, independent of the analytic Jacobian.
    fn fd_jacobian(model: &ChainModel, q: &JointVector, frame: Frame, h: f64) -> Matrix6xX<f64> {
        let mut jac = Matrix6xX::zeros(model.dof());
        for i in 0..model.dof() {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[i] += h;
            qm[i] -= h;
            let tp = model.forward_kinematics(&qp, frame).unwrap();
            let tm = model.forward_kinematics(&qm, frame).unwrap();
            let lin = (tp.translation - tm.translation) / (2.0 * h);
            let ang = rotation_log(&(tp.rotation * tm.rotation.transpose())) / (2.0 * h);
            jac.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
            jac.fixed_view_mut::<3, 1>(3, i).copy_from(&ang);
        }
        jac
    }

    #[test]
    fn nominal_model_loads() {
        let m = ChainModel::nominal();
        assert_eq!(m.dof(), DEFAULT_DOF);
        assert_eq!(m.joints[HEIGHT].kind, JointKind::Prismatic);
        assert_eq!(m.joints[HEIGHT].lower, 0.25);
        assert_eq!(m.joints[HEIGHT].upper, 0.45);
        assert_eq!(m.joints[PITCH].lower, -0.4);
        assert_eq!(m.joints[PITCH].upper, 0.4);
        assert!(m.camera.is_some());
    }

    #[test]
    fn zero_configuration_is_composed_offsets() {
        let m = ChainModel::nominal();
        let q = JointVector::zeros(m.dof());
        let mut expected = Pose::identity();
        for j in &m.joints {
            expected = expected.compose(&j.origin);
        }
        expected = expected.compose(&m.ee_offset);
        let ee = m.forward_kinematics(&q, Frame::EndEffector).unwrap();
        assert_relative_eq!(ee.translation, expected.translation, epsilon = 1e-12);
        assert_relative_eq!(ee.rotation, expected.rotation, epsilon = 1e-12);
    }

    #[test]
    fn height_joint_lifts_end_effector() {
        let m = ChainModel::nominal();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_q(&m, &mut rng);
        let mut q2 = q.clone();
        q2[HEIGHT] += 0.05;
        let a = m.forward_kinematics(&q, Frame::EndEffector).unwrap();
        let b = m.forward_kinematics(&q2, Frame::EndEffector).unwrap();
        assert_relative_eq!(b.translation - a.translation, Vec3::new(0.0, 0.0, 0.05), epsilon = 1e-12);
    }

    #[test]
    fn pitch_rotates_zero_configuration() {
        let m = ChainModel::nominal();
        let mut q = JointVector::zeros(m.dof());
        q[HEIGHT] = 0.3;
        let p0 = m.forward_kinematics(&q, Frame::EndEffector).unwrap().translation;
        q[PITCH] = FRAC_PI_2;
        let p1 = m.forward_kinematics(&q, Frame::EndEffector).unwrap().translation;
        // Pitch axis is body y through (0, 0, h).
        let pivot = Vec3::new(0.0, 0.0, 0.3);
        let expected = Pose::from_axis_angle(Vec3::y(), FRAC_PI_2).transform_point(&(p0 - pivot)) + pivot;
        assert_relative_eq!(p1, expected, epsilon = 1e-12);
    }

    #[test]
    fn height_column_is_world_z() {
        let m = ChainModel::nominal();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let q = random_q(&m, &mut rng);
            let jac = m.jacobian(&q, Frame::EndEffector).unwrap();
            let col: Vec<f64> = jac.column(HEIGHT).iter().copied().collect();
            assert_eq!(col, vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn pitch_column_vanishes_on_pitch_axis() {
        // Tool point folded back onto the pitch axis.
        let json = r#"{
            "joints": [
              {"name":"h","type":"prismatic","axis":[0,0,1],"lower":0,"upper":1,"max_velocity":1},
              {"name":"pitch","type":"revolute","axis":[0,1,0],"lower":-1,"upper":1,"max_velocity":1},
              {"name":"a","type":"revolute","axis":[0,0,1],"origin":{"translation":[0.3,0,0]},"lower":-4,"upper":4,"max_velocity":1}
            ],
            "ee_offset": {"translation":[0.3,0,0]}
        }"#;
        let m = ChainModel::from_json(json).unwrap();
        let q = DVector::from_vec(vec![0.4, 0.2, std::f64::consts::PI]);
        let ee = m.forward_kinematics(&q, Frame::EndEffector).unwrap();
        let trunk = m.forward_kinematics(&q, Frame::Joint(PITCH)).unwrap();
        assert!((ee.translation - trunk.translation).norm() < 1e-12);
        let jac = m.jacobian(&q, Frame::EndEffector).unwrap();
        assert!(jac.fixed_view::<3, 1>(0, PITCH).norm() < 1e-12);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let m = ChainModel::nominal();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let q = random_q(&m, &mut rng);
            for frame in [Frame::EndEffector, Frame::Camera, Frame::Joint(4)] {
                let a = m.jacobian(&q, frame).unwrap();
                let n = fd_jacobian(&m, &q, frame, 1e-6);
                let scale = a.abs().max().max(1.0);
                assert!((a - n).abs().max() / scale < 1e-5, "frame {frame:?}");
            }
        }
    }

    #[test]
    fn unknown_frames_and_dims() {
        let m = ChainModel::nominal();
        let q = JointVector::zeros(8);
        assert!(matches!(
            m.forward_kinematics(&q, Frame::Joint(8)),
            Err(KinematicsError::UnknownFrame(_))
        ));
        assert!(matches!(
            m.forward_kinematics(&JointVector::zeros(3), Frame::EndEffector),
            Err(KinematicsError::Dimension { .. })
        ));
        let mut no_cam = m.clone();
        no_cam.camera = None;
        assert!(no_cam.jacobian(&q, Frame::Camera).is_err());
    }

    #[test]
    fn invalid_limits_rejected() {
        let json = r#"{"joints":[{"name":"a","type":"revolute","axis":[0,0,1],"lower":1,"upper":1,"max_velocity":1}],"ee_offset":{}}"#;
        assert!(matches!(ChainModel::from_json(json), Err(KinematicsError::InvalidModel(_))));
    }

    #[test]
    fn fk_is_lipschitz() {
        let m = ChainModel::nominal();
        let l = m.lipschitz_bound();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let q = random_q(&m, &mut rng);
            let dq = DVector::from_fn(m.dof(), |_, _| rng.random_range(-1e-3..1e-3));
            let a = m.forward_kinematics(&q, Frame::EndEffector).unwrap().translation;
            let b = m.forward_kinematics(&(&q + &dq), Frame::EndEffector).unwrap().translation;
            assert!((a - b).norm() <= l * dq.lp_norm(1) + 1e-12);
        }
    }

    #[test]
    fn split_base_refs_projection() {
        let q = DVector::from_vec(vec![0.3, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let r = split_base_refs(&q).unwrap();
        assert_eq!(r.h_des, 0.3);
        assert_eq!(r.pitch_des, 0.1);
        assert_eq!(r.arm, [0.0; 6]);
        assert_eq!(r.to_joint_vector(), q);
        let q = DVector::from_vec((0..8).map(|i| i as f64 * 0.1).collect());
        assert_eq!(split_base_refs(&q).unwrap().to_joint_vector(), q);
        assert!(split_base_refs(&JointVector::zeros(7)).is_err());
    }
}
