//! Locomotion-side math: policy observation layout and stacking, the
//! periodic contact clock, and the reward terms.

pub mod gait;
pub mod rewards;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gait::{contact_schedule, GaitParams};
pub use rewards::{
    compute_rewards, total_reward, ActionHistory, ContactMode, DynamicsSample, RewardConfig, RewardSample, TerrainSample,
};

pub const LEG_DOF: usize = 12;
pub const ARM_DOF: usize = 6;
pub const FRAME_LEN: usize = 44;
pub const STACK: usize = 5;
pub const OBS_LEN: usize = FRAME_LEN * STACK;

/// Offsets of each field inside one 44-value frame.
pub mod layout {
    use std::ops::Range;
    pub const V: Range<usize> = 0..3;
    pub const W: Range<usize> = 3..6;
    pub const Q_LEG: Range<usize> = 6..18;
    pub const QDOT_LEG: Range<usize> = 18..30;
    pub const Q_ARM: Range<usize> = 30..36;
    pub const V_DES: Range<usize> = 36..39;
    pub const W_DES: Range<usize> = 39..42;
    pub const H_DES: usize = 42;
    pub const THETA_DES: usize = 43;
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocomotionError {
    #[error("{field} has {actual} entries, expected {expected}")]
    Dimension {
        field: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("history holds {0} frames, expected 1..=5")]
    HistoryLength(usize),
    #[error("invalid gait parameters: {0}")]
    InvalidGaitParams(String),
    #[error("no weight for reward term {0}")]
    MissingWeight(String),
}

pub(crate) fn check_len(field: &'static str, v: &[f64], expected: usize) -> Result<(), LocomotionError> {
    if v.len() != expected {
        return Err(LocomotionError::Dimension {
            field,
            expected,
            actual: v.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProprioState {
    pub v: [f64; 3],
    pub w: [f64; 3],
    pub q_leg: Vec<f64>,
    pub qdot_leg: Vec<f64>,
    pub q_arm: Vec<f64>,
}

impl Default for ProprioState {
    fn default() -> Self {
        Self {
            v: [0.0; 3],
            w: [0.0; 3],
            q_leg: vec![0.0; LEG_DOF],
            qdot_leg: vec![0.0; LEG_DOF],
            q_arm: vec![0.0; ARM_DOF],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReferenceCmd {
    pub v_des: [f64; 3],
    pub w_des: [f64; 3],
    pub h_des: f64,
    pub theta_des: f64,
}

/// One observation frame `(v, w, q_leg, q̇_leg, q_arm, v_des, w_des, h_des, θ_des)`.
pub fn observation_frame(p: &ProprioState, r: &ReferenceCmd) -> Result<[f64; FRAME_LEN], LocomotionError> {
    check_len("q_leg", &p.q_leg, LEG_DOF)?;
    check_len("qdot_leg", &p.qdot_leg, LEG_DOF)?;
    check_len("q_arm", &p.q_arm, ARM_DOF)?;
    let mut f = [0.0; FRAME_LEN];
    f[layout::V].copy_from_slice(&p.v);
    f[layout::W].copy_from_slice(&p.w);
    f[layout::Q_LEG].copy_from_slice(&p.q_leg);
    f[layout::QDOT_LEG].copy_from_slice(&p.qdot_leg);
    f[layout::Q_ARM].copy_from_slice(&p.q_arm);
    f[layout::V_DES].copy_from_slice(&r.v_des);
    f[layout::W_DES].copy_from_slice(&r.w_des);
    f[layout::H_DES] = r.h_des;
    f[layout::THETA_DES] = r.theta_des;
    Ok(f)
}

/// Inverse of [`observation_frame`].
pub fn split_frame(f: &[f64]) -> Result<(ProprioState, ReferenceCmd), LocomotionError> {
    check_len("frame", f, FRAME_LEN)?;
    let arr3 = |r: std::ops::Range<usize>| [f[r.start], f[r.start + 1], f[r.start + 2]];
    Ok((
        ProprioState {
            v: arr3(layout::V),
            w: arr3(layout::W),
            q_leg: f[layout::Q_LEG].to_vec(),
            qdot_leg: f[layout::QDOT_LEG].to_vec(),
            q_arm: f[layout::Q_ARM].to_vec(),
        },
        ReferenceCmd {
            v_des: arr3(layout::V_DES),
            w_des: arr3(layout::W_DES),
            h_des: f[layout::H_DES],
            theta_des: f[layout::THETA_DES],
        },
    ))
}

/// Stacks up to five frames, oldest first and newest last, padding the
/// front with copies of the oldest frame.
pub fn assemble_observation(history: &[[f64; FRAME_LEN]]) -> Result<Vec<f64>, LocomotionError> {
    if history.is_empty() || history.len() > STACK {
        return Err(LocomotionError::HistoryLength(history.len()));
    }
    let mut out = Vec::with_capacity(OBS_LEN);
    for _ in history.len()..STACK {
        out.extend_from_slice(&history[0]);
    }
    for f in history {
        out.extend_from_slice(f);
    }
    Ok(out)
}

/// Rolling window of the last five frames.
#[derive(Debug, Clone, Default)]
pub struct ObservationHistory {
    frames: std::collections::VecDeque<[f64; FRAME_LEN]>,
}

impl ObservationHistory {
    pub fn push(&mut self, p: &ProprioState, r: &ReferenceCmd) -> Result<Vec<f64>, LocomotionError> {
        let f = observation_frame(p, r)?;
        if self.frames.len() == STACK {
            self.frames.pop_front();
        }
        self.frames.push_back(f);
        assemble_observation(self.frames.make_contiguous())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}
