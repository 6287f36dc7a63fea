//! Headless episodes: a policy drives a [`Simulation`] and everything that
//! happens is collected into a deterministic report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::runtime::{SimEvent, SimOptions, Simulation, TickInput};
use super::scene::SceneConfig;
use super::{BaseCmd, SimError};
use crate::kinematics::{ChainModel, ARM_DOF};
use crate::mission::{MissionPhase, PrimitiveLibrary, Trigger};

/// Drive-to-standoff, grasp, then optionally unload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScriptedParams {
    /// Desired forward distance from base to bottle center (m).
    pub standoff: f64,
    /// Stop when within this distance of the standoff point (m).
    pub tolerance: f64,
    pub gain: f64,
    pub max_speed: f64,
    /// Stationary time before triggering the grasp (s).
    pub settle: f64,
    pub max_attempts: u32,
    /// Move the base at all; off means the bottle must already be in reach.
    pub approach: bool,
    pub unload: bool,
}

impl Default for ScriptedParams {
    fn default() -> Self {
        Self {
            standoff: 0.65,
            tolerance: 0.03,
            gain: 1.5,
            max_speed: 0.3,
            settle: 0.5,
            max_attempts: 3,
            approach: true,
            unload: true,
        }
    }
}

/// Operator input replayed at fixed times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedInput {
    pub t: f64,
    #[serde(flatten)]
    pub input: TickInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    Scripted(ScriptedParams),
    /// Recorded teleop session: velocity commands hold until replaced,
    /// triggers fire once.
    Replay { inputs: Vec<TimedInput> },
}

impl Default for Policy {
    fn default() -> Self {
        Policy::Scripted(ScriptedParams::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub max_time: f64,
    pub policy: Policy,
    /// Trajectory sample period in control ticks.
    pub log_every: u32,
    /// Stop as soon as the policy has nothing left to do.
    pub stop_when_done: bool,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            max_time: 60.0,
            policy: Policy::default(),
            log_every: 10,
            stop_when_done: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub h: f64,
    pub theta: f64,
    pub arm: [f64; ARM_DOF],
    pub gripper: f64,
    pub phase: MissionPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnloadOutcome {
    pub handle_gripped: bool,
    pub max_lift: f64,
    pub basket_deg: f64,
    pub door_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub entries: u32,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub max_time: f64,
    pub duration: f64,
    pub timed_out: bool,
    pub grasp_attempts: u32,
    pub grasp_successes: u32,
    pub loaded: u32,
    pub time_to_grasp: Option<f64>,
    pub time_to_load: Option<f64>,
    pub unload: Option<UnloadOutcome>,
    pub ik_solves: u32,
    pub ik_converged: u32,
    pub final_phase: MissionPhase,
    /// Time spent per phase, keyed by phase name.
    pub phases: BTreeMap<String, PhaseTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub summary: EpisodeSummary,
    pub trajectory: Vec<TrajectorySample>,
    pub events: Vec<SimEvent>,
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record<'a> {
    Trajectory(&'a TrajectorySample),
    Event(&'a SimEvent),
    Summary(&'a EpisodeSummary),
}

impl EpisodeReport {
    pub fn grasp_and_load(&self) -> bool {
        self.summary.loaded > 0
    }

    /// Trajectory samples, then events, then the summary, one JSON object
    /// per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |r: Record<'_>| {
            out.push_str(&serde_json::to_string(&r).expect("report records serialize"));
            out.push('\n');
        };
        self.trajectory.iter().for_each(|s| push(Record::Trajectory(s)));
        self.events.iter().for_each(|e| push(Record::Event(e)));
        push(Record::Summary(&self.summary));
        out
    }
}

#[derive(Debug, Default)]
struct ScriptState {
    settled: f64,
    attempts: u32,
    unload_sent: bool,
    unloaded: bool,
    loads_seen: usize,
}

impl ScriptState {
    fn decide(&mut self, p: &ScriptedParams, sim: &Simulation) -> TickInput {
        let mut input = TickInput::default();
        if sim.phase() != MissionPhase::Rest || !sim.is_idle() {
            self.settled = 0.0;
            return input;
        }
        if sim.loaded_count() > self.loads_seen {
            self.loads_seen = sim.loaded_count();
            self.unload_sent = false;
            self.unloaded = false;
        }
        if p.unload && self.loads_seen > 0 && !self.unload_sent {
            self.unload_sent = true;
            input.trigger = Some(Trigger::Unload);
            return input;
        }
        if self.unload_sent {
            self.unloaded = true;
        }
        if self.attempts >= p.max_attempts || self.loads_seen > 0 || !sim.detection_valid() {
            self.settled = 0.0;
            return input;
        }
        let Some(e) = sim.estimate() else {
            return input;
        };
        let (ex, ey) = (e.estimate.center.x - p.standoff, e.estimate.center.y);
        if p.approach && (ex.hypot(ey) > p.tolerance) {
            let lim = |v: f64| (p.gain * v).clamp(-p.max_speed, p.max_speed);
            input.cmd_vel = BaseCmd {
                vx: lim(ex),
                vy: lim(ey),
                wz: 0.0,
            };
            self.settled = 0.0;
            return input;
        }
        self.settled += sim.options().dt;
        if self.settled + 1e-9 >= p.settle {
            self.settled = 0.0;
            self.attempts += 1;
            input.trigger = Some(Trigger::Grasp);
        }
        input
    }

    fn done(&self, p: &ScriptedParams, sim: &Simulation) -> bool {
        if sim.phase() != MissionPhase::Rest || !sim.is_idle() {
            return false;
        }
        let collected = self.loads_seen > 0 && (!p.unload || self.unloaded);
        collected || self.attempts >= p.max_attempts
    }
}

/// Runs one episode on `scene` until the policy is done or `max_time`.
pub fn run_episode(
    scene: &SceneConfig,
    model: &ChainModel,
    lib: &PrimitiveLibrary,
    opts: &SimOptions,
    cfg: &EpisodeConfig,
) -> Result<EpisodeReport, SimError> {
    let mut sim = Simulation::new(scene.clone(), model, lib.clone(), opts.clone())?;
    let mut trajectory = Vec::new();
    let mut events = Vec::new();
    let mut script = ScriptState::default();
    let mut replay_idx = 0usize;
    let mut held = BaseCmd::default();
    let n_ticks = (cfg.max_time / opts.dt).round() as u64;
    let mut timed_out = true;

    for k in 0..n_ticks {
        if k % cfg.log_every.max(1) as u64 == 0 {
            trajectory.push(sample(&sim));
        }
        let input = match &cfg.policy {
            Policy::Scripted(p) => {
                if cfg.stop_when_done && script.done(p, &sim) {
                    timed_out = false;
                    break;
                }
                script.decide(p, &sim)
            }
            Policy::Replay { inputs } => {
                let mut trigger = None;
                while replay_idx < inputs.len() && inputs[replay_idx].t <= sim.time() + 1e-9 {
                    held = inputs[replay_idx].input.cmd_vel;
                    trigger = trigger.or(inputs[replay_idx].input.trigger);
                    replay_idx += 1;
                }
                TickInput { cmd_vel: held, trigger }
            }
        };
        sim.tick(&input)?;
        events.extend(sim.take_events());
    }
    if matches!(cfg.policy, Policy::Replay { .. }) {
        timed_out = false;
    }
    trajectory.push(sample(&sim));
    let summary = summarize(scene.seed, cfg.max_time, sim.time(), timed_out, sim.phase(), &events);
    Ok(EpisodeReport {
        summary,
        trajectory,
        events,
    })
}

fn sample(sim: &Simulation) -> TrajectorySample {
    let s = sim.state();
    TrajectorySample {
        t: s.time,
        x: s.base.x,
        y: s.base.y,
        yaw: s.base.yaw,
        h: s.h,
        theta: s.theta,
        arm: s.arm,
        gripper: s.gripper,
        phase: sim.phase(),
    }
}

fn summarize(
    seed: u64,
    max_time: f64,
    duration: f64,
    timed_out: bool,
    final_phase: MissionPhase,
    events: &[SimEvent],
) -> EpisodeSummary {
    let mut s = EpisodeSummary {
        seed,
        max_time,
        duration,
        timed_out,
        grasp_attempts: 0,
        grasp_successes: 0,
        loaded: 0,
        time_to_grasp: None,
        time_to_load: None,
        unload: None,
        ik_solves: 0,
        ik_converged: 0,
        final_phase,
        phases: BTreeMap::new(),
    };
    let mut current = (MissionPhase::Rest, 0.0);
    let close = |phase: MissionPhase, from: f64, to: f64, phases: &mut BTreeMap<String, PhaseTiming>| {
        let e = phases.entry(format!("{phase:?}")).or_default();
        e.entries += 1;
        e.total_s += to - from;
    };
    for ev in events {
        match *ev {
            SimEvent::Phase { t, to, .. } => {
                close(current.0, current.1, t, &mut s.phases);
                current = (to, t);
            }
            SimEvent::Grasp { t, success, .. } => {
                s.grasp_attempts += 1;
                if success {
                    s.grasp_successes += 1;
                    s.time_to_grasp.get_or_insert(t);
                }
            }
            SimEvent::Load { t, .. } => {
                s.loaded += 1;
                s.time_to_load.get_or_insert(t);
            }
            SimEvent::IkSolve { converged, .. } => {
                s.ik_solves += 1;
                s.ik_converged += converged as u32;
            }
            SimEvent::HandleGrip { success, .. } => {
                s.unload = Some(UnloadOutcome {
                    handle_gripped: success,
                    max_lift: 0.0,
                    basket_deg: 0.0,
                    door_deg: 0.0,
                });
            }
            SimEvent::BinClosed {
                max_lift,
                basket_deg,
                door_deg,
                ..
            } => {
                s.unload = Some(UnloadOutcome {
                    handle_gripped: true,
                    max_lift,
                    basket_deg,
                    door_deg,
                });
            }
            SimEvent::Reset { t } => {
                close(current.0, current.1, t, &mut s.phases);
                current = (MissionPhase::Rest, t);
            }
            SimEvent::Perception { .. } | SimEvent::Drop { .. } => {}
        }
    }
    close(current.0, current.1, duration, &mut s.phases);
    s
}
