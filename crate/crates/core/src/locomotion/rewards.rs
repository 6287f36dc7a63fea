//! Locomotion reward terms. Vector squares are squared Euclidean norms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{check_len, LocomotionError, ReferenceCmd, LEG_DOF};

pub const BASE_LINEAR_VELOCITY: &str = "base_linear_velocity";
pub const BASE_ANGULAR_VELOCITY: &str = "base_angular_velocity";
pub const BASE_ORIENTATION: &str = "base_orientation";
pub const BASE_HEIGHT: &str = "base_height";
pub const JOINT_TORQUE: &str = "joint_torque";
pub const JOINT_ACCELERATION: &str = "joint_acceleration";
pub const JOINT_ENERGY: &str = "joint_energy";
pub const UNDESIRED_CONTACT: &str = "undesired_contact";
pub const ACTION_RATE: &str = "action_rate";
pub const ACTION_SMOOTHNESS: &str = "action_smoothness";
pub const FEET_CONTACT_SUGGESTION: &str = "feet_contact_suggestion";
pub const FEET_HEIGHT_CLEARANCE: &str = "feet_height_clearance";
pub const FEET_TO_HIPS: &str = "feet_to_hips";

pub const TERM_NAMES: [&str; 13] = [
    BASE_LINEAR_VELOCITY,
    BASE_ANGULAR_VELOCITY,
    BASE_ORIENTATION,
    BASE_HEIGHT,
    JOINT_TORQUE,
    JOINT_ACCELERATION,
    JOINT_ENERGY,
    UNDESIRED_CONTACT,
    ACTION_RATE,
    ACTION_SMOOTHNESS,
    FEET_CONTACT_SUGGESTION,
    FEET_HEIGHT_CLEARANCE,
    FEET_TO_HIPS,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsSample {
    pub tau: Vec<f64>,
    pub qddot: Vec<f64>,
    /// Leg joint velocities, paired with `tau` in the energy term.
    pub qdot: Vec<f64>,
    pub base_collisions: u32,
    /// Measured foot contact (FL, FR, RL, RR).
    pub contacts: [bool; 4],
    pub foot_pos_z: [f64; 4],
    pub foot_to_hip_xy: [[f64; 2]; 4],
    pub theta: f64,
    pub h: f64,
}

impl Default for DynamicsSample {
    fn default() -> Self {
        Self {
            tau: vec![0.0; LEG_DOF],
            qddot: vec![0.0; LEG_DOF],
            qdot: vec![0.0; LEG_DOF],
            base_collisions: 0,
            contacts: [false; 4],
            foot_pos_z: [0.0; 4],
            foot_to_hip_xy: [[0.0; 2]; 4],
            theta: 0.0,
            h: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TerrainSample {
    pub theta: f64,
    /// Terrain height under each foot.
    pub h: [f64; 4],
}

/// Leg joint targets at steps k, k−1, k−2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionHistory {
    pub q_des: [Vec<f64>; 3],
}

impl Default for ActionHistory {
    fn default() -> Self {
        Self {
            q_des: std::array::from_fn(|_| vec![0.0; LEG_DOF]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactMode {
    /// `−Σ|c_des − c|`.
    #[default]
    Mismatch,
    /// `−Σ(c_des − c)` exactly as tabulated.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    /// Swing apex height above the terrain (m).
    pub foot_z_des: f64,
    pub contact_mode: ContactMode,
    /// Reference foot-to-hip offsets in the horizontal frame.
    pub foot_to_hip_ref: [[f64; 2]; 4],
    pub weights: BTreeMap<String, f64>,
}

impl Default for RewardConfig {
    fn default() -> Self {
        let weights = [
            (BASE_LINEAR_VELOCITY, 1.0),
            (BASE_ANGULAR_VELOCITY, 0.05),
            (BASE_ORIENTATION, 1.0),
            (BASE_HEIGHT, 1.0),
            (JOINT_TORQUE, 1e-5),
            (JOINT_ACCELERATION, 2.5e-7),
            (JOINT_ENERGY, 1e-4),
            (UNDESIRED_CONTACT, 1.0),
            (ACTION_RATE, 0.01),
            (ACTION_SMOOTHNESS, 0.005),
            (FEET_CONTACT_SUGGESTION, 0.2),
            (FEET_HEIGHT_CLEARANCE, 0.1),
            (FEET_TO_HIPS, 0.5),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            foot_z_des: 0.08,
            contact_mode: ContactMode::Mismatch,
            foot_to_hip_ref: [[0.0; 2]; 4],
            weights,
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn sq_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// The 13 named terms. `v` and `w` are the measured base velocities and
/// `c_des` the commanded contacts; clearance only counts commanded-swing feet.
#[allow(clippy::too_many_arguments)]
pub fn compute_rewards(
    d: &DynamicsSample,
    r: &ReferenceCmd,
    v: &[f64; 3],
    w: &[f64; 3],
    terrain: &TerrainSample,
    actions: &ActionHistory,
    c_des: &[bool; 4],
    cfg: &RewardConfig,
) -> Result<BTreeMap<String, f64>, LocomotionError> {
    check_len("tau", &d.tau, LEG_DOF)?;
    check_len("qddot", &d.qddot, LEG_DOF)?;
    check_len("qdot", &d.qdot, LEG_DOF)?;
    for a in &actions.q_des {
        check_len("q_des", a, LEG_DOF)?;
    }
    let [qk, qk1, qk2] = &actions.q_des;

    let smooth: Vec<f64> = (0..LEG_DOF).map(|i| qk[i] - 2.0 * qk1[i] - qk2[i]).collect();
    let contact: f64 = (0..4)
        .map(|i| {
            let diff = c_des[i] as u8 as f64 - d.contacts[i] as u8 as f64;
            match cfg.contact_mode {
                ContactMode::Mismatch => -diff.abs(),
                ContactMode::Literal => -diff,
            }
        })
        .sum();
    let clearance: f64 = (0..4)
        .filter(|&i| !c_des[i])
        .map(|i| {
            let e = cfg.foot_z_des + terrain.h[i] - d.foot_pos_z[i];
            (-e * e / 0.01).exp()
        })
        .sum();
    let hips: f64 = (0..4).map(|i| sq_dist(&cfg.foot_to_hip_ref[i], &d.foot_to_hip_xy[i])).sum();
    let orient = terrain.theta + r.theta_des - d.theta;

    let terms = [
        (BASE_LINEAR_VELOCITY, (-sq_dist(&r.v_des, v) / 0.25).exp()),
        (BASE_ANGULAR_VELOCITY, -sq_dist(&r.w_des, w)),
        (BASE_ORIENTATION, -orient * orient),
        (BASE_HEIGHT, (-(r.h_des - d.h).powi(2) / 0.01).exp()),
        (JOINT_TORQUE, -sq_norm(&d.tau)),
        (JOINT_ACCELERATION, -sq_norm(&d.qddot)),
        (JOINT_ENERGY, -d.qdot.iter().zip(&d.tau).map(|(a, b)| (a * b).abs()).sum::<f64>()),
        (UNDESIRED_CONTACT, -(d.base_collisions as f64)),
        (ACTION_RATE, -sq_dist(qk, qk1)),
        (ACTION_SMOOTHNESS, -sq_norm(&smooth)),
        (FEET_CONTACT_SUGGESTION, contact),
        (FEET_HEIGHT_CLEARANCE, clearance),
        (FEET_TO_HIPS, -hips),
    ];
    // `+ 0.0` turns the −0.0 of negated zeros into +0.0.
    Ok(terms.into_iter().map(|(k, v)| (k.to_string(), v + 0.0)).collect())
}

/// Weighted sum over `terms`, in key order.
pub fn total_reward(terms: &BTreeMap<String, f64>, weights: &BTreeMap<String, f64>) -> Result<f64, LocomotionError> {
    terms.iter().try_fold(0.0, |acc, (k, v)| {
        let w = weights.get(k).ok_or_else(|| LocomotionError::MissingWeight(k.clone()))?;
        Ok(acc + w * v)
    })
}

/// Everything `compute_rewards` needs, as one serializable record.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardSample {
    pub dynamics: DynamicsSample,
    pub reference: ReferenceCmd,
    pub v: [f64; 3],
    pub w: [f64; 3],
    pub terrain: TerrainSample,
    pub actions: ActionHistory,
    /// Commanded contacts; derived from `t` and the trot clock when absent.
    pub c_des: Option<[bool; 4]>,
    pub t: f64,
}

impl RewardSample {
    pub fn evaluate(&self, cfg: &RewardConfig) -> Result<(BTreeMap<String, f64>, f64), LocomotionError> {
        let c_des = match self.c_des {
            Some(c) => c,
            None => super::contact_schedule(self.t, &super::GaitParams::trot())?,
        };
        let terms = compute_rewards(
            &self.dynamics,
            &self.reference,
            &self.v,
            &self.w,
            &self.terrain,
            &self.actions,
            &c_des,
            cfg,
        )?;
        let total = total_reward(&terms, &cfg.weights)?;
        Ok((terms, total))
    }
}
