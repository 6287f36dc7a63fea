//! Wire messages. One JSON object per text frame, discriminated by `type`.

use base64::Engine;
use serde::{Deserialize, Serialize};

use litterbot_core::mission::{MissionPhase, Trigger};
use litterbot_core::perception::{BottleEstimate, DepthMap};
use litterbot_core::sim::runtime::{SimEvent, Simulation};
use litterbot_core::sim::{BaseCmd, Bottle, PlanarPose};

/// Client-to-server messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CommandMessage {
    CmdVel { vx: f64, vy: f64, wz: f64 },
    Trigger { action: Trigger },
    SetScene { scene: String },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("velocities must be finite")]
    NonFinite,
    #[error("binary frames are not supported")]
    Binary,
}

impl CommandMessage {
    pub fn parse(text: &str) -> Result<Self, ProtocolError> {
        let msg: CommandMessage = serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
        if let CommandMessage::CmdVel { vx, vy, wz } = msg {
            if ![vx, vy, wz].iter().all(|v| v.is_finite()) {
                return Err(ProtocolError::NonFinite);
            }
        }
        Ok(msg)
    }
}

/// Server-to-client messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    State(Box<StateSnapshot>),
    Error { detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BottleView {
    #[serde(flatten)]
    pub bottle: Bottle,
    pub loaded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinState {
    pub lift: f64,
    pub basket_deg: f64,
    pub door_deg: f64,
}

/// Depth raster as base64 of little-endian `f32` samples, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthFrame {
    pub width: u32,
    pub height: u32,
    pub data: String,
}

impl DepthFrame {
    pub fn encode(d: &DepthMap) -> Self {
        let bytes: Vec<u8> = d.data.iter().flat_map(|z| z.to_le_bytes()).collect();
        Self {
            width: d.width,
            height: d.height,
            data: base64::engine::general_purpose::STANDARD.encode(bytes),
        }
    }

    pub fn decode(&self) -> Option<DepthMap> {
        let bytes = base64::engine::general_purpose::STANDARD.decode(&self.data).ok()?;
        if bytes.len() != 4 * self.width as usize * self.height as usize {
            return None;
        }
        Some(DepthMap {
            width: self.width,
            height: self.height,
            data: bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub time: f64,
    pub tick: u64,
    pub base: PlanarPose,
    pub h: f64,
    pub theta: f64,
    pub arm: [f64; 6],
    pub gripper: f64,
    pub phase: MissionPhase,
    /// Velocity applied on the latest tick, after clamping and watchdog.
    pub cmd_vel: BaseCmd,
    /// Latest filtered detection in the heading frame.
    pub estimate: Option<BottleEstimate>,
    pub bottles: Vec<BottleView>,
    pub bin: BinState,
    /// Recent non-perception events, oldest first.
    pub events: Vec<SimEvent>,
    pub scene: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<DepthFrame>,
}

impl StateSnapshot {
    pub fn capture(sim: &Simulation, scene: &str, events: &[SimEvent], with_depth: bool) -> Self {
        let s = sim.state();
        let (basket_deg, door_deg) = sim.bin_angles();
        let bottles = sim
            .bottles()
            .unwrap_or_else(|_| sim.bottle_slots().iter().map(|b| b.bottle).collect())
            .into_iter()
            .zip(sim.bottle_slots())
            .map(|(bottle, slot)| BottleView {
                bottle,
                loaded: slot.loaded,
            })
            .collect();
        Self {
            time: s.time,
            tick: sim.ticks(),
            base: s.base,
            h: s.h,
            theta: s.theta,
            arm: s.arm,
            gripper: s.gripper,
            phase: sim.phase(),
            cmd_vel: sim.commanded_velocity(),
            estimate: sim.estimate().filter(|_| sim.detection_valid()).map(|e| e.estimate),
            bottles,
            bin: BinState {
                lift: sim.handle_lift(),
                basket_deg,
                door_deg,
            },
            events: events.to_vec(),
            scene: scene.to_string(),
            depth: if with_depth { sim.latest_depth().map(DepthFrame::encode) } else { None },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use litterbot_core::mission::PrimitiveLibrary;
    use litterbot_core::sim::{SceneConfig, SimOptions, TickInput};
    use litterbot_core::ChainModel;

    #[test]
    fn parses_commands() {
        assert_eq!(
            CommandMessage::parse(r#"{"type":"cmd_vel","vx":0.3,"vy":0,"wz":-0.1}"#).unwrap(),
            CommandMessage::CmdVel { vx: 0.3, vy: 0.0, wz: -0.1 }
        );
        assert_eq!(
            CommandMessage::parse(r#"{"type":"trigger","action":"unload"}"#).unwrap(),
            CommandMessage::Trigger { action: Trigger::Unload }
        );
        assert_eq!(
            CommandMessage::parse(r#"{"type":"set_scene","scene":"empty"}"#).unwrap(),
            CommandMessage::SetScene { scene: "empty".into() }
        );
    }

    #[test]
    fn rejects_bad_commands() {
        for bad in [
            "",
            "null",
            "[1,2]",
            r#"{"type":"teleport","x":1}"#,
            r#"{"type":"cmd_vel","vx":0.3}"#,
            r#"{"type":"cmd_vel","vx":"fast","vy":0,"wz":0}"#,
            r#"{"type":"cmd_vel","vx":1e999,"vy":0,"wz":0}"#,
            r#"{"type":"trigger","action":"dance"}"#,
            r#"{"vx":0.3,"vy":0,"wz":0}"#,
        ] {
            assert!(CommandMessage::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn error_reply_shape() {
        let s = serde_json::to_string(&ServerMessage::Error { detail: "x".into() }).unwrap();
        assert_eq!(s, r#"{"type":"error","detail":"x"}"#);
    }

    #[test]
    fn snapshot_round_trips() {
        let opts = SimOptions {
            keep_depth: true,
            ..SimOptions::default()
        };
        let mut sim = Simulation::new(
            SceneConfig::spawn_in_workspace(2),
            &ChainModel::nominal(),
            PrimitiveLibrary::nominal(),
            opts,
        )
        .unwrap();
        let mut events = Vec::new();
        for _ in 0..150 {
            sim.tick(&TickInput::default()).unwrap();
            events.extend(sim.take_events());
        }
        let snap = StateSnapshot::capture(&sim, "spawn", &events, true);
        assert!(snap.estimate.is_some());
        let json = serde_json::to_string(&ServerMessage::State(Box::new(snap.clone()))).unwrap();
        assert!(json.starts_with(r#"{"type":"state""#));
        let back: ServerMessage = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ServerMessage::State(Box::new(snap.clone())));
        let depth = snap.depth.unwrap().decode().unwrap();
        assert_eq!(Some(&depth), sim.latest_depth());
    }
}
