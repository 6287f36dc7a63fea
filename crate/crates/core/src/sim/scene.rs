//! Scene description: ground, bottles, bin handle and camera.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PlanarPose, SimError};
use crate::geometry::{Intrinsics, Pose, Vec3};
use crate::kinematics::{ready_pose, ChainModel, Frame, PITCH};
use crate::mission::{Primitive, PrimitiveLibrary};

/// Capped cylinder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bottle {
    pub center: Vec3,
    pub axis: Vec3,
    pub radius: f64,
    pub half_length: f64,
}

impl Bottle {
    /// Bottle lying on the ground with its axis at heading `yaw`.
    pub fn lying(x: f64, y: f64, yaw: f64, ground_z: f64, radius: f64, half_length: f64) -> Self {
        Self {
            center: Vec3::new(x, y, ground_z + radius),
            axis: Vec3::new(yaw.cos(), yaw.sin(), 0.0),
            radius,
            half_length,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraConfig {
    pub intrinsics: Intrinsics,
    /// Mount relative to the trunk; `None` keeps the model's mount.
    pub mount: Option<Pose>,
    /// Hits beyond this range read as invalid.
    pub max_range: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            intrinsics: default_intrinsics(),
            mount: None,
            max_range: 5.0,
        }
    }
}

/// 160×120 pinhole with a ~60° horizontal field of view.
pub fn default_intrinsics() -> Intrinsics {
    Intrinsics {
        fx: 140.0,
        fy: 140.0,
        cx: 79.5,
        cy: 59.5,
        width: 160,
        height: 120,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub ground_z: f64,
    pub bottles: Vec<Bottle>,
    /// Rest pose of the bin handle in the trunk frame. The bin rides on the
    /// robot's back.
    pub bin: Pose,
    pub camera: CameraConfig,
    pub start: PlanarPose,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            ground_z: 0.0,
            bottles: Vec::new(),
            bin: nominal_handle_pose(),
            camera: CameraConfig::default(),
            start: PlanarPose::default(),
            seed: 0,
        }
    }
}

/// Handle pose reached by the last box-reaching keypoint of the shipped
/// primitive library, in the trunk frame.
pub fn nominal_handle_pose() -> Pose {
    let model = ChainModel::nominal();
    let lib = PrimitiveLibrary::nominal();
    let kp = lib
        .waypoints(Primitive::BoxReaching)
        .ok()
        .and_then(|w| w.last())
        .and_then(|k| k.joints)
        .expect("bundled library has box-reaching joints");
    let mut q = ready_pose();
    q.as_mut_slice()[2..].copy_from_slice(&kp);
    let trunk = model.forward_kinematics(&q, Frame::Joint(PITCH)).expect("nominal model");
    let ee = model.forward_kinematics(&q, Frame::EndEffector).expect("nominal model");
    trunk.inverse().compose(&ee)
}

impl SceneConfig {
    pub fn from_json(s: &str) -> Result<Self, SimError> {
        let mut scene: SceneConfig = serde_json::from_str(s)?;
        for b in &mut scene.bottles {
            let n = b.axis.norm();
            if n > 0.0 {
                b.axis /= n;
            }
        }
        scene.validate()?;
        Ok(scene)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, SimError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidScene(m));
        if !self.ground_z.is_finite() {
            return bad("ground height not finite".into());
        }
        for (i, b) in self.bottles.iter().enumerate() {
            if !(b.radius > 0.0 && b.half_length > 0.0) || !b.radius.is_finite() || !b.half_length.is_finite() {
                return bad(format!("bottle {i}: radius and half_length must be positive"));
            }
            if (b.axis.norm() - 1.0).abs() > 1e-9 || !b.center.iter().all(|c| c.is_finite()) {
                return bad(format!("bottle {i}: axis must be a unit vector and center finite"));
            }
        }
        self.camera
            .intrinsics
            .validate()
            .map_err(|e| SimError::InvalidScene(format!("camera: {e}")))?;
        if !(self.camera.max_range > 0.0) {
            return bad("camera max_range must be positive".into());
        }
        Ok(())
    }

    /// Copy of `model` carrying this scene's camera mount.
    pub fn camera_model(&self, model: &ChainModel) -> Result<ChainModel, SimError> {
        let mut m = model.clone();
        match (self.camera.mount, m.camera.as_mut()) {
            (Some(pose), Some(cam)) => cam.pose = pose,
            (Some(_), None) => return Err(SimError::InvalidScene("model has no camera to re-mount".into())),
            (None, None) => return Err(SimError::InvalidScene("model has no camera".into())),
            (None, Some(_)) => {}
        }
        Ok(m)
    }

    /// One bottle lying on the ground in front of the robot, inside the
    /// region the scripted approach can grasp from.
    pub fn spawn_in_workspace(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let radius = rng.random_range(0.010..0.014);
        let half_length = rng.random_range(0.05..0.09);
        let bottle = Bottle::lying(
            rng.random_range(0.45..0.70),
            rng.random_range(-0.12..0.12),
            rng.random_range(0.0..std::f64::consts::PI),
            0.0,
            radius,
            half_length,
        );
        Self {
            bottles: vec![bottle],
            seed,
            ..Self::default()
        }
    }
}
