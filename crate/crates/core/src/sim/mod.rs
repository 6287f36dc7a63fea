//! Desk-scale kinematic world.
//!
//! The legged base is modeled as perfect velocity tracking with rate-limited
//! height and pitch; there is no physics. Bottles are capped cylinders that
//! stay where they are unless held by the gripper.

pub mod episode;
pub mod eval;
pub mod grasp;
pub mod render;
pub mod runtime;
pub mod scene;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pose, Vec3};
use crate::ik::IkError;
use crate::kinematics::{ready_pose, ChainModel, Frame, JointVector, KinematicsError, ARM_DOF, HEIGHT, PITCH};
use crate::mission::MissionError;
use crate::perception::PerceptionError;

pub use episode::{run_episode, EpisodeConfig, EpisodeReport, Policy, ScriptedParams};
pub use eval::{run_batch, EvalSummary};
pub use grasp::{check_grasp, GraspCheck, GraspTolerance};
pub use render::{render_depth, render_view, RenderOutput};
pub use runtime::{SimOptions, Simulation, TickInput};
pub use scene::{Bottle, CameraConfig, SceneConfig};

/// Command clamps.
pub const MAX_LINEAR_VEL: f64 = 1.0;
pub const MAX_ANGULAR_VEL: f64 = 1.5;
/// Height and pitch tracking rate limits (m/s, rad/s).
pub const HEIGHT_RATE: f64 = 0.2;
pub const PITCH_RATE: f64 = 1.0;
/// Full open-to-closed gripper travel takes 0.5 s.
pub const GRIPPER_RATE: f64 = 2.0;
pub const MAX_DT: f64 = 0.1;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("time step {0} outside (0, 0.1]")]
    InvalidStep(f64),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Ik(#[from] IkError),
    #[error(transparent)]
    Mission(#[from] MissionError),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error("scene file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Base position and heading on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanarPose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl PlanarPose {
    /// Ground-level heading frame in the world.
    pub fn to_pose(&self, ground_z: f64) -> Pose {
        Pose::from_axis_angle(Vec3::z(), self.yaw).with_translation(Vec3::new(self.x, self.y, ground_z))
    }
}

/// Body-frame base velocity command.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BaseCmd {
    pub vx: f64,
    pub vy: f64,
    pub wz: f64,
}

impl BaseCmd {
    pub fn clamped(&self) -> Self {
        let lin = |v: f64| if v.is_finite() { v.clamp(-MAX_LINEAR_VEL, MAX_LINEAR_VEL) } else { 0.0 };
        Self {
            vx: lin(self.vx),
            vy: lin(self.vy),
            wz: if self.wz.is_finite() { self.wz.clamp(-MAX_ANGULAR_VEL, MAX_ANGULAR_VEL) } else { 0.0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseRefs {
    pub h_des: f64,
    pub theta_des: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum AttachedObject {
    Bottle(usize),
    Handle,
}

/// Object held by the gripper, stored relative to the tool frame so its
/// world pose follows the end-effector exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    pub object: AttachedObject,
    pub rel_center: Vec3,
    pub rel_axis: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub base: PlanarPose,
    pub h: f64,
    pub theta: f64,
    pub arm: [f64; ARM_DOF],
    /// 1 open, 0 closed.
    pub gripper: f64,
    pub attached: Option<Attachment>,
    pub time: f64,
}

impl RobotState {
    /// Ready posture at `base`, gripper open.
    pub fn ready(base: PlanarPose) -> Self {
        let q = ready_pose();
        let mut arm = [0.0; ARM_DOF];
        arm.copy_from_slice(&q.as_slice()[2..]);
        Self {
            base,
            h: q[HEIGHT],
            theta: q[PITCH],
            arm,
            gripper: 1.0,
            attached: None,
            time: 0.0,
        }
    }

    pub fn q(&self) -> JointVector {
        let mut q = JointVector::zeros(2 + ARM_DOF);
        q[HEIGHT] = self.h;
        q[PITCH] = self.theta;
        q.as_mut_slice()[2..].copy_from_slice(&self.arm);
        q
    }

    /// Chain frame in the heading frame.
    pub fn frame_in_heading(&self, model: &ChainModel, frame: Frame) -> Result<Pose, SimError> {
        Ok(model.forward_kinematics(&self.q(), frame)?)
    }

    pub fn frame_in_world(&self, model: &ChainModel, frame: Frame, ground_z: f64) -> Result<Pose, SimError> {
        Ok(self.base.to_pose(ground_z).compose(&self.frame_in_heading(model, frame)?))
    }
}

fn approach(x: f64, target: f64, max_step: f64) -> f64 {
    x + (target - x).clamp(-max_step, max_step)
}

/// Advances the robot by `dt`. Velocity commands are clamped; h, θ, arm and
/// gripper move toward their targets at their rate limits and stay inside
/// the model limits.
pub fn step_sim(
    model: &ChainModel,
    state: &RobotState,
    cmd: &BaseCmd,
    refs: &BaseRefs,
    arm_cmd: &[f64; ARM_DOF],
    gripper_cmd: f64,
    dt: f64,
) -> Result<RobotState, SimError> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(SimError::InvalidStep(dt));
    }
    if model.dof() != 2 + ARM_DOF {
        return Err(KinematicsError::Dimension {
            expected: 2 + ARM_DOF,
            actual: model.dof(),
        }
        .into());
    }
    let c = cmd.clamped();
    let mut s = state.clone();
    let (sin, cos) = state.base.yaw.sin_cos();
    s.base.x += (c.vx * cos - c.vy * sin) * dt;
    s.base.y += (c.vx * sin + c.vy * cos) * dt;
    s.base.yaw += c.wz * dt;

    let lower = model.lower();
    let upper = model.upper();
    let vmax = model.max_velocity();
    let target = |i: usize, v: f64, cur: f64| if v.is_finite() { v.clamp(lower[i], upper[i]) } else { cur };
    s.h = approach(s.h, target(HEIGHT, refs.h_des, s.h), HEIGHT_RATE * dt).clamp(lower[HEIGHT], upper[HEIGHT]);
    s.theta =
        approach(s.theta, target(PITCH, refs.theta_des, s.theta), PITCH_RATE * dt).clamp(lower[PITCH], upper[PITCH]);
    for (k, a) in s.arm.iter_mut().enumerate() {
        let i = 2 + k;
        let goal = if arm_cmd[k].is_finite() { arm_cmd[k].clamp(lower[i], upper[i]) } else { *a };
        *a = approach(*a, goal, vmax[i] * dt).clamp(lower[i], upper[i]);
    }
    let g = if gripper_cmd.is_finite() { gripper_cmd.clamp(0.0, 1.0) } else { s.gripper };
    s.gripper = approach(s.gripper, g, GRIPPER_RATE * dt);
    s.time += dt;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn hold(s: &RobotState) -> (BaseRefs, [f64; ARM_DOF], f64) {
        (
            BaseRefs {
                h_des: s.h,
                theta_des: s.theta,
            },
            s.arm,
            s.gripper,
        )
    }

    #[test]
    fn zero_command_is_fixed_point() {
        let m = ChainModel::nominal();
        let s = RobotState::ready(PlanarPose { x: 1.0, y: -2.0, yaw: 0.3 });
        let (r, a, g) = hold(&s);
        let n = step_sim(&m, &s, &BaseCmd::default(), &r, &a, g, 0.05).unwrap();
        assert_eq!(n.base, s.base);
        assert_eq!((n.h, n.theta, n.arm, n.gripper), (s.h, s.theta, s.arm, s.gripper));
        assert_eq!(n.time, 0.05);
    }

    #[test]
    fn forward_and_rotated_integration() {
        let m = ChainModel::nominal();
        let s = RobotState::ready(PlanarPose::default());
        let (r, a, g) = hold(&s);
        let cmd = BaseCmd { vx: 1.0, vy: 0.0, wz: 0.0 };
        let n = step_sim(&m, &s, &cmd, &r, &a, g, 0.1).unwrap();
        assert_eq!(n.base.x, 0.1);
        assert_eq!(n.base.y, 0.0);

        let s = RobotState::ready(PlanarPose { x: 0.0, y: 0.0, yaw: FRAC_PI_2 });
        let n = step_sim(&m, &s, &cmd, &r, &a, g, 0.1).unwrap();
        assert_relative_eq!(n.base.y, 0.1, epsilon = 1e-15);
        assert_relative_eq!(n.base.x, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn commands_are_clamped() {
        let m = ChainModel::nominal();
        let s = RobotState::ready(PlanarPose::default());
        let (r, a, g) = hold(&s);
        let cmd = BaseCmd { vx: 5.0, vy: -5.0, wz: f64::NAN };
        let n = step_sim(&m, &s, &cmd, &r, &a, g, 0.1).unwrap();
        assert_relative_eq!(n.base.x, 0.1, epsilon = 1e-15);
        assert_relative_eq!(n.base.y, -0.1, epsilon = 1e-15);
        assert_eq!(n.base.yaw, 0.0);
    }

    #[test]
    fn rate_limits() {
        let m = ChainModel::nominal();
        let s = RobotState::ready(PlanarPose::default());
        let refs = BaseRefs { h_des: s.h - 1.0, theta_des: s.theta + 1.0 };
        let mut arm = s.arm;
        arm[0] = 2.0;
        let n = step_sim(&m, &s, &BaseCmd::default(), &refs, &arm, 0.0, 0.1).unwrap();
        assert_relative_eq!(n.h, s.h - 0.02, epsilon = 1e-12);
        assert_relative_eq!(n.theta, s.theta + 0.1, epsilon = 1e-12);
        assert_relative_eq!(n.arm[0], m.max_velocity()[2] * 0.1, epsilon = 1e-12);
        assert_relative_eq!(n.gripper, 0.8, epsilon = 1e-12);
    }

    #[test]
    fn bad_dt() {
        let m = ChainModel::nominal();
        let s = RobotState::ready(PlanarPose::default());
        let (r, a, g) = hold(&s);
        for dt in [0.0, -0.01, 0.11, f64::NAN] {
            assert!(matches!(
                step_sim(&m, &s, &BaseCmd::default(), &r, &a, g, dt),
                Err(SimError::InvalidStep(_))
            ));
        }
    }

    proptest! {
        #[test]
        fn stays_within_limits(
            h in -1.0f64..2.0, th in -2.0f64..2.0,
            arm in prop::array::uniform6(-4.0f64..4.0),
            steps in 1usize..40,
        ) {
            let m = ChainModel::nominal();
            let mut s = RobotState::ready(PlanarPose::default());
            let refs = BaseRefs { h_des: h, theta_des: th };
            for _ in 0..steps {
                s = step_sim(&m, &s, &BaseCmd::default(), &refs, &arm, 0.5, 0.1).unwrap();
            }
            prop_assert!(m.within_limits(&s.q(), 1e-12));
        }
    }
}
