//! Primitive-sequencing state machine, primitive library and bin linkage.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::ChainModel;

/// Handle travel at full bin opening (m).
pub const HANDLE_TRAVEL: f64 = 0.114;
pub const BASKET_FULL_DEG: f64 = 26.0;
pub const DOOR_FULL_DEG: f64 = 48.0;

#[derive(Debug, Error)]
pub enum MissionError {
    #[error("primitive {0} missing from library")]
    MissingPrimitive(String),
    #[error("primitive {primitive} keypoint {index}: {detail}")]
    InvalidKeypoint {
        primitive: Primitive,
        index: usize,
        detail: String,
    },
    #[error("handle lift {0} m outside [0, 0.114]")]
    OutOfTravel(f64),
    #[error(transparent)]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Primitive {
    LitterLoading,
    BoxReaching,
    BoxOpening,
    RestPose,
    OpenGripper,
    CloseGripper,
}

impl Primitive {
    pub const ALL: [Primitive; 6] = [
        Primitive::LitterLoading,
        Primitive::BoxReaching,
        Primitive::BoxOpening,
        Primitive::RestPose,
        Primitive::OpenGripper,
        Primitive::CloseGripper,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Primitive::LitterLoading => "litter_loading",
            Primitive::BoxReaching => "box_reaching",
            Primitive::BoxOpening => "box_opening",
            Primitive::RestPose => "rest_pose",
            Primitive::OpenGripper => "open_gripper",
            Primitive::CloseGripper => "close_gripper",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }
}

impl std::fmt::Display for Primitive {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    /// Arm joint targets; `None` holds the arm where it is (gripper-only
    /// primitives).
    pub joints: Option<[f64; 6]>,
    /// Gripper opening, 0 closed to 1 open.
    pub gripper: f64,
    pub dwell_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveLibrary {
    entries: BTreeMap<Primitive, Vec<Keypoint>>,
}

impl PrimitiveLibrary {
    pub fn nominal() -> Self {
        Self::from_json(include_str!("../data/primitives.json"), &ChainModel::nominal())
            .expect("bundled primitive library is valid")
    }

    /// Parses a name → keypoint-list map and checks it against the arm
    /// limits of `model` (joints after the two base joints).
    pub fn from_json(s: &str, model: &ChainModel) -> Result<Self, MissionError> {
        let raw: BTreeMap<String, Vec<Keypoint>> = serde_json::from_str(s)?;
        let mut entries = BTreeMap::new();
        for (name, kps) in raw {
            let p = Primitive::from_name(&name).ok_or(MissionError::MissingPrimitive(name))?;
            entries.insert(p, kps);
        }
        let lib = Self { entries };
        lib.validate(model)?;
        Ok(lib)
    }

    pub fn from_file(path: &std::path::Path, model: &ChainModel) -> Result<Self, MissionError> {
        Self::from_json(&std::fs::read_to_string(path)?, model)
    }

    pub fn validate(&self, model: &ChainModel) -> Result<(), MissionError> {
        let arm = &model.joints[model.dof().saturating_sub(6)..];
        for p in Primitive::ALL {
            let kps = self.waypoints(p)?;
            let bad = |index: usize, detail: String| MissionError::InvalidKeypoint { primitive: p, index, detail };
            if kps.is_empty() {
                return Err(bad(0, "no keypoints".into()));
            }
            for (i, k) in kps.iter().enumerate() {
                if !(k.dwell_s > 0.0) {
                    return Err(bad(i, format!("dwell {} must be positive", k.dwell_s)));
                }
                if !(0.0..=1.0).contains(&k.gripper) {
                    return Err(bad(i, format!("gripper {} outside [0, 1]", k.gripper)));
                }
                for (q, j) in k.joints.iter().flatten().zip(arm) {
                    if !(j.lower..=j.upper).contains(q) {
                        return Err(bad(i, format!("{} = {q} outside [{}, {}]", j.name, j.lower, j.upper)));
                    }
                }
            }
        }
        Ok(())
    }

    /// Configured keypoints, verbatim.
    pub fn waypoints(&self, p: Primitive) -> Result<&[Keypoint], MissionError> {
        self.entries
            .get(&p)
            .map(Vec::as_slice)
            .ok_or_else(|| MissionError::MissingPrimitive(p.name().to_string()))
    }
}

/// Basket and door angles (degrees) for a handle lift, linear between the
/// closed and fully open states.
pub fn bin_linkage(handle_lift: f64) -> Result<(f64, f64), MissionError> {
    if !(0.0..=HANDLE_TRAVEL).contains(&handle_lift) {
        return Err(MissionError::OutOfTravel(handle_lift));
    }
    let s = handle_lift / HANDLE_TRAVEL;
    Ok((BASKET_FULL_DEG * s, DOOR_FULL_DEG * s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MissionPhase {
    #[default]
    Rest,
    Grasping,
    Closing,
    Loading,
    Releasing,
    UnloadReach,
    UnloadGrip,
    UnloadOpen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Grasp,
    Unload,
    Rest,
    Reset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct MissionEvents {
    pub detection_valid: bool,
    pub ik_converged: bool,
    pub primitive_done: bool,
    pub operator_trigger: Option<Trigger>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Primitive(Primitive),
    /// Track the IK solution for the current grasp target.
    IkTarget,
}

/// One transition. With `auto_grasp` a valid detection in Rest starts a
/// grasp on its own; otherwise it also needs the grasp trigger.
pub fn step_mission(phase: MissionPhase, ev: &MissionEvents, auto_grasp: bool) -> (MissionPhase, Option<Command>) {
    use MissionPhase::*;
    let prim = |next: MissionPhase, p: Primitive| (next, Some(Command::Primitive(p)));
    match ev.operator_trigger {
        Some(Trigger::Rest) => return prim(Rest, Primitive::RestPose),
        Some(Trigger::Reset) => return (Rest, None),
        Some(Trigger::Unload) if phase == Rest => return prim(UnloadReach, Primitive::BoxReaching),
        _ => {}
    }
    let grasp_requested = auto_grasp || ev.operator_trigger == Some(Trigger::Grasp);
    let out = match phase {
        Rest if ev.detection_valid && grasp_requested => prim(Grasping, Primitive::OpenGripper),
        Grasping if !ev.detection_valid => prim(Rest, Primitive::RestPose),
        Grasping if ev.ik_converged => prim(Closing, Primitive::CloseGripper),
        Grasping => (Grasping, Some(Command::IkTarget)),
        Closing if ev.primitive_done => prim(Loading, Primitive::LitterLoading),
        Loading if ev.primitive_done => prim(Releasing, Primitive::OpenGripper),
        Releasing if ev.primitive_done => prim(Rest, Primitive::RestPose),
        UnloadReach if ev.primitive_done => prim(UnloadGrip, Primitive::CloseGripper),
        UnloadGrip if ev.primitive_done => prim(UnloadOpen, Primitive::BoxOpening),
        UnloadOpen if ev.primitive_done => prim(Rest, Primitive::RestPose),
        _ => (phase, None),
    };
    if out.0 == phase && ev.operator_trigger.is_some() {
        log::debug!("trigger {:?} ignored in {:?}", ev.operator_trigger, phase);
    }
    out
}

/// Owned machine state for a control loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mission {
    pub phase: MissionPhase,
    pub auto_grasp: bool,
}

impl Default for Mission {
    fn default() -> Self {
        Self {
            phase: MissionPhase::Rest,
            auto_grasp: true,
        }
    }
}

impl Mission {
    pub fn step(&mut self, ev: &MissionEvents) -> Option<Command> {
        let (next, cmd) = step_mission(self.phase, ev, self.auto_grasp);
        if next != self.phase {
            log::debug!("mission {:?} -> {:?} ({:?})", self.phase, next, cmd);
        }
        self.phase = next;
        cmd
    }
}
