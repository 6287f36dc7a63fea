//! Closed-loop simulation: perception, mission machine, IK and primitive
//! playback around [`step_sim`](super::step_sim).
//!
//! One [`Simulation`] owns all mutable world state. Callers feed one
//! [`TickInput`] per control tick and read state back through accessors.

use serde::{Deserialize, Serialize};

use super::grasp::{check_grasp, GraspTolerance};
use super::render::render_view;
use super::scene::{Bottle, SceneConfig};
use super::{step_sim, AttachedObject, Attachment, BaseCmd, BaseRefs, PlanarPose, RobotState, SimError};
use crate::geometry::{Pose, Vec3};
use crate::ik::{ik_solve, IkConfig};
use crate::kinematics::{ready_pose, ChainModel, Frame, JointVector, ARM_DOF, HEIGHT, PITCH};
use crate::mission::{bin_linkage, Command, Keypoint, Mission, MissionEvents, MissionPhase, Primitive, PrimitiveLibrary, Trigger, HANDLE_TRAVEL};
use crate::par::Exec;
use crate::perception::{
    estimate_axis_3d, grasp_pose_from_estimate, refine_mask, to_base_frame, BottleEstimate, DepthMap, EstimateFrame,
    Stabilizer, DEFAULT_BETA,
};

/// Joint tolerance for "keypoint reached".
const REACHED: f64 = 1e-9;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimOptions {
    /// Control period (s).
    pub dt: f64,
    /// Perception runs every this many control ticks.
    pub perception_every: u32,
    pub beta: f64,
    pub grasp: GraspTolerance,
    /// Max tool-to-handle distance for the bin handle grip (m).
    pub handle_tolerance: f64,
    /// A detection stays valid this long after the last good frame (s).
    pub detection_hold: f64,
    /// Smaller masks do not count as a detection.
    pub min_mask_pixels: usize,
    /// Standoff along the approach axis for the grasp target (m).
    pub approach_offset: f64,
    /// Start grasping on any detection instead of waiting for the trigger.
    pub auto_grasp: bool,
    pub ik: IkConfig,
    /// Keep the latest depth raster for streaming.
    pub keep_depth: bool,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            dt: 0.01,
            perception_every: 10,
            beta: DEFAULT_BETA,
            grasp: GraspTolerance::default(),
            handle_tolerance: 0.02,
            detection_hold: 0.5,
            min_mask_pixels: 30,
            approach_offset: 0.0,
            auto_grasp: false,
            ik: grasp_ik_config(),
            keep_depth: false,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TickInput {
    pub cmd_vel: BaseCmd,
    pub trigger: Option<Trigger>,
}

/// Things that happened during a tick, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SimEvent {
    Phase {
        t: f64,
        from: MissionPhase,
        to: MissionPhase,
    },
    Perception {
        t: f64,
        valid: bool,
        bottle: Option<usize>,
        pixels: usize,
        axis_error_deg: Option<f64>,
        center_error: Option<f64>,
    },
    IkSolve {
        t: f64,
        converged: bool,
        iterations: usize,
        residual: f64,
    },
    Grasp {
        t: f64,
        bottle: Option<usize>,
        success: bool,
        position_error: f64,
        alignment_error_deg: f64,
    },
    Drop {
        t: f64,
        bottle: usize,
    },
    Load {
        t: f64,
        bottle: usize,
    },
    HandleGrip {
        t: f64,
        success: bool,
        position_error: f64,
    },
    BinClosed {
        t: f64,
        max_lift: f64,
        basket_deg: f64,
        door_deg: f64,
    },
    Reset {
        t: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BottleSlot {
    /// World pose when free; stale while attached.
    pub bottle: Bottle,
    pub loaded: bool,
}

/// Latest filtered detection, in the heading frame of `base`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackedEstimate {
    pub estimate: BottleEstimate,
    pub bottle: usize,
    /// Time of the last valid raw frame.
    pub last_seen: f64,
    pub base: PlanarPose,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Targets {
    pub refs: BaseRefs,
    pub arm: [f64; ARM_DOF],
    pub gripper: f64,
}

#[derive(Debug, Clone)]
struct Playback {
    primitive: Primitive,
    keypoints: Vec<Keypoint>,
    index: usize,
    dwell: f64,
}

#[derive(Debug, Clone)]
struct IkTrack {
    q: JointVector,
    converged: bool,
    /// Estimate generation the solution was computed for.
    generation: u64,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    model: ChainModel,
    lib: PrimitiveLibrary,
    opts: SimOptions,
    scene: SceneConfig,
    trunk_nominal: Pose,
    state: RobotState,
    bottles: Vec<BottleSlot>,
    mission: Mission,
    stabilizer: Stabilizer,
    stabilizer_base: PlanarPose,
    estimate: Option<TrackedEstimate>,
    generation: u64,
    targets: Targets,
    cmd_vel: BaseCmd,
    playback: Option<Playback>,
    primitive_done: bool,
    ik: Option<IkTrack>,
    pending_trigger: Option<Trigger>,
    handle_lift: f64,
    max_lift: f64,
    tick: u64,
    events: Vec<SimEvent>,
    depth: Option<DepthMap>,
}

impl Simulation {
    pub fn new(scene: SceneConfig, model: &ChainModel, lib: PrimitiveLibrary, opts: SimOptions) -> Result<Self, SimError> {
        scene.validate()?;
        lib.validate(model)?;
        if !(opts.dt > 0.0 && opts.dt <= super::MAX_DT) {
            return Err(SimError::InvalidStep(opts.dt));
        }
        let stabilizer = Stabilizer::new(opts.beta)?;
        let model = scene.camera_model(model)?;
        let trunk_nominal = model.forward_kinematics(&ready_pose(), Frame::Joint(PITCH))?;
        let state = RobotState::ready(scene.start);
        let mut mission = Mission::default();
        mission.auto_grasp = opts.auto_grasp;
        Ok(Self {
            trunk_nominal,
            bottles: scene.bottles.iter().map(|b| BottleSlot { bottle: *b, loaded: false }).collect(),
            mission,
            stabilizer,
            stabilizer_base: state.base,
            estimate: None,
            generation: 0,
            targets: hold_targets(&state),
            cmd_vel: BaseCmd::default(),
            playback: None,
            primitive_done: false,
            ik: None,
            pending_trigger: None,
            handle_lift: 0.0,
            max_lift: 0.0,
            tick: 0,
            events: Vec::new(),
            depth: None,
            state,
            model,
            lib,
            opts,
            scene,
        })
    }

    /// Restores the initial scene and robot state.
    pub fn reset(&mut self) -> Result<(), SimError> {
        let fresh = Self::new(self.scene.clone(), &self.model, self.lib.clone(), self.opts.clone())?;
        let events = std::mem::take(&mut self.events);
        *self = fresh;
        self.events = events;
        self.events.push(SimEvent::Reset { t: 0.0 });
        Ok(())
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn scene(&self) -> &SceneConfig {
        &self.scene
    }

    pub fn model(&self) -> &ChainModel {
        &self.model
    }

    pub fn options(&self) -> &SimOptions {
        &self.opts
    }

    pub fn phase(&self) -> MissionPhase {
        self.mission.phase
    }

    pub fn time(&self) -> f64 {
        self.state.time
    }

    pub fn ticks(&self) -> u64 {
        self.tick
    }

    /// Velocity command applied on the last tick (after clamping).
    pub fn commanded_velocity(&self) -> BaseCmd {
        self.cmd_vel
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    /// Filtered detection in the current heading frame.
    pub fn estimate(&self) -> Option<TrackedEstimate> {
        self.estimate.map(|mut e| {
            e.estimate = reexpress(&e.estimate, &e.base, &self.state.base, self.scene.ground_z);
            e.base = self.state.base;
            e
        })
    }

    pub fn detection_valid(&self) -> bool {
        self.estimate.is_some_and(|e| {
            e.estimate.valid
                && self.state.time - e.last_seen <= self.opts.detection_hold + 1e-9
                && self.is_free(e.bottle)
        })
    }

    pub fn bottle_slots(&self) -> &[BottleSlot] {
        &self.bottles
    }

    /// Current world pose of every bottle, following the gripper if held.
    pub fn bottles(&self) -> Result<Vec<Bottle>, SimError> {
        (0..self.bottles.len()).map(|i| self.bottle_world(i)).collect()
    }

    pub fn loaded_count(&self) -> usize {
        self.bottles.iter().filter(|b| b.loaded).count()
    }

    pub fn handle_lift(&self) -> f64 {
        self.handle_lift
    }

    /// (basket, door) angles in degrees.
    pub fn bin_angles(&self) -> (f64, f64) {
        bin_linkage(self.handle_lift).unwrap_or((0.0, 0.0))
    }

    pub fn latest_depth(&self) -> Option<&DepthMap> {
        self.depth.as_ref()
    }

    /// No primitive playing and no command pending.
    pub fn is_idle(&self) -> bool {
        self.playback.is_none() && !self.primitive_done && self.pending_trigger.is_none()
    }

    pub fn take_events(&mut self) -> Vec<SimEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn tool_in_world(&self) -> Result<Pose, SimError> {
        self.state.frame_in_world(&self.model, Frame::EndEffector, self.scene.ground_z)
    }

    fn is_free(&self, i: usize) -> bool {
        !self.bottles[i].loaded
            && !matches!(self.state.attached, Some(Attachment { object: AttachedObject::Bottle(j), .. }) if j == i)
    }

    fn bottle_world(&self, i: usize) -> Result<Bottle, SimError> {
        let slot = &self.bottles[i];
        match self.state.attached {
            Some(a) if a.object == AttachedObject::Bottle(i) => {
                let tool = self.tool_in_world()?;
                Ok(Bottle {
                    center: tool.transform_point(&a.rel_center),
                    axis: tool.transform_vector(&a.rel_axis),
                    ..slot.bottle
                })
            }
            _ => Ok(slot.bottle),
        }
    }

    /// One control tick.
    pub fn tick(&mut self, input: &TickInput) -> Result<(), SimError> {
        let trigger = input.trigger.or(self.pending_trigger.take());
        if trigger == Some(Trigger::Reset) {
            return self.reset();
        }
        self.cmd_vel = input.cmd_vel.clamped();

        if self.tick % self.opts.perception_every.max(1) as u64 == 0 {
            self.perceive()?;
        }

        let ev = MissionEvents {
            detection_valid: self.detection_valid(),
            ik_converged: self.ik_converged(),
            primitive_done: std::mem::take(&mut self.primitive_done),
            operator_trigger: trigger,
        };
        let before = self.mission.phase;
        let cmd = self.mission.step(&ev);
        let after = self.mission.phase;
        if after != before {
            self.events.push(SimEvent::Phase {
                t: self.state.time,
                from: before,
                to: after,
            });
            if before == MissionPhase::Grasping {
                self.ik = None;
            }
        }
        match cmd {
            Some(Command::Primitive(p)) => self.start_primitive(p)?,
            Some(Command::IkTarget) => self.track_ik()?,
            None => {}
        }
        self.apply_playback_targets();

        self.state = step_sim(
            &self.model,
            &self.state,
            &self.cmd_vel,
            &self.targets.refs,
            &self.targets.arm,
            self.targets.gripper,
            self.opts.dt,
        )?;
        self.advance_playback();
        self.update_handle()?;
        self.tick += 1;
        Ok(())
    }

    fn perceive(&mut self) -> Result<(), SimError> {
        let t = self.state.time;
        let camera_in_heading = self.state.frame_in_heading(&self.model, Frame::Camera)?;
        let heading = self.state.base.to_pose(self.scene.ground_z);
        let camera_in_world = heading.compose(&camera_in_heading);
        let slots: Vec<Option<Bottle>> = (0..self.bottles.len())
            .map(|i| if self.is_free(i) { Some(self.bottles[i].bottle) } else { None })
            .collect();
        let out = render_view(
            &camera_in_world,
            &self.scene.camera.intrinsics,
            &slots,
            Some(self.scene.ground_z),
            self.scene.camera.max_range,
            self.opts.exec,
        );
        // Stand-in for the segmenter: the largest visible bottle.
        let best = out
            .masks
            .iter()
            .enumerate()
            .map(|(i, m)| (m.count(), i))
            .filter(|(n, _)| *n >= self.opts.min_mask_pixels.max(1))
            .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
        let mut raw = BottleEstimate::invalid(EstimateFrame::Base);
        let mut sample = (None, 0, None, None);
        if let Some((pixels, i)) = best {
            let mask = refine_mask(&out.masks[i]);
            if let Ok(cam_est) = estimate_axis_3d(&mask, &out.depth, &self.scene.camera.intrinsics) {
                if cam_est.valid {
                    raw = to_base_frame(&cam_est, &camera_in_heading)?;
                    let truth = self.bottles[i].bottle;
                    let inv = heading.inverse();
                    let c_true = inv.transform_point(&truth.center);
                    let a_true = inv.transform_vector(&truth.axis);
                    let axis_err = raw.axis.dot(&a_true).abs().min(1.0).acos().to_degrees();
                    sample = (Some(i), pixels, Some(axis_err), Some((raw.center - c_true).norm()));
                }
            }
            sample.0 = Some(i);
            sample.1 = pixels;
        }
        self.events.push(SimEvent::Perception {
            t,
            valid: raw.valid,
            bottle: sample.0,
            pixels: sample.1,
            axis_error_deg: sample.2,
            center_error: sample.3,
        });

        if let Some(prev) = self.stabilizer.prev.as_mut() {
            *prev = reexpress(prev, &self.stabilizer_base, &self.state.base, self.scene.ground_z);
        }
        self.stabilizer_base = self.state.base;
        if raw.valid {
            let bottle = sample.0.expect("valid estimate has a bottle");
            if self.estimate.is_some_and(|e| e.bottle != bottle) {
                self.stabilizer.reset();
            }
            let filtered = self.stabilizer.update(raw);
            self.estimate = Some(TrackedEstimate {
                estimate: filtered,
                bottle,
                last_seen: t,
                base: self.state.base,
            });
            self.generation += 1;
        }
        if self.opts.keep_depth {
            self.depth = Some(out.depth);
        }
        Ok(())
    }

    fn ik_converged(&self) -> bool {
        if self.mission.phase != MissionPhase::Grasping || self.playback.is_some() {
            return false;
        }
        match &self.ik {
            Some(track) if track.converged => {
                let q = self.state.q();
                (q - &track.q).amax() <= REACHED
            }
            _ => false,
        }
    }

    /// Grasp target for the current detection in the heading frame. The
    /// approach direction is taken from the trunk at its nominal pose so the
    /// target does not move while the IK changes height and pitch.
    pub fn grasp_target(&self) -> Result<Option<Pose>, SimError> {
        let Some(tracked) = self.estimate() else {
            return Ok(None);
        };
        if !tracked.estimate.valid {
            return Ok(None);
        }
        let trunk = self.trunk_nominal;
        let inv = trunk.inverse();
        let mut e = tracked.estimate;
        e.center = inv.transform_point(&e.center);
        e.axis = inv.transform_vector(&e.axis);
        // Of the two symmetric grasps, take the one closer to the current
        // tool roll.
        let tool_x = inv.transform_vector(&self.state.frame_in_heading(&self.model, Frame::EndEffector)?.axis(0));
        if e.axis.dot(&tool_x) < 0.0 {
            e.axis = -e.axis;
        }
        let pose = grasp_pose_from_estimate(&e, self.opts.approach_offset)?;
        Ok(Some(trunk.compose(&pose)))
    }

    fn track_ik(&mut self) -> Result<(), SimError> {
        if self.ik.as_ref().is_some_and(|t| t.generation == self.generation) {
            return Ok(());
        }
        let Some(target) = self.grasp_target()? else {
            return Ok(());
        };
        let seed = self.ik.as_ref().map(|t| t.q.clone()).unwrap_or_else(|| self.state.q());
        let problem = self.opts.ik.problem(&self.model, target, ready_pose())?;
        let sol = ik_solve(&problem, &seed)?;
        self.events.push(SimEvent::IkSolve {
            t: self.state.time,
            converged: sol.converged,
            iterations: sol.iterations,
            residual: sol.residual,
        });
        self.targets.refs = BaseRefs {
            h_des: sol.q[HEIGHT],
            theta_des: sol.q[PITCH],
        };
        self.targets.arm.copy_from_slice(&sol.q.as_slice()[2..]);
        self.ik = Some(IkTrack {
            q: sol.q,
            converged: sol.converged,
            generation: self.generation,
        });
        Ok(())
    }

    fn start_primitive(&mut self, p: Primitive) -> Result<(), SimError> {
        let keypoints = self.lib.waypoints(p)?.to_vec();
        if p == Primitive::RestPose {
            let q = ready_pose();
            self.targets.refs = BaseRefs {
                h_des: q[HEIGHT],
                theta_des: q[PITCH],
            };
        }
        self.playback = Some(Playback {
            primitive: p,
            keypoints,
            index: 0,
            dwell: 0.0,
        });
        self.activate_keypoint()
    }

    fn activate_keypoint(&mut self) -> Result<(), SimError> {
        let Some(kp) = self.playback.as_ref().and_then(|pb| pb.keypoints.get(pb.index).copied()) else {
            return Ok(());
        };
        if let Some(j) = kp.joints {
            self.targets.arm = j;
        }
        let was_closed = self.targets.gripper < 0.5;
        let closing = kp.gripper < 0.5;
        self.targets.gripper = kp.gripper;
        match (was_closed, closing) {
            (false, true) => self.on_close()?,
            (true, false) => self.on_open()?,
            _ => {}
        }
        Ok(())
    }

    fn apply_playback_targets(&mut self) {
        if let Some(kp) = self.playback.as_ref().and_then(|pb| pb.keypoints.get(pb.index)) {
            if let Some(j) = kp.joints {
                self.targets.arm = j;
            }
            self.targets.gripper = kp.gripper;
        }
    }

    fn keypoint_reached(&self, kp: &Keypoint) -> bool {
        let arm_ok = kp
            .joints
            .is_none_or(|j| j.iter().zip(&self.state.arm).all(|(a, b)| (a - b).abs() <= REACHED));
        let base_ok = (self.state.h - self.targets.refs.h_des).abs() <= REACHED
            && (self.state.theta - self.targets.refs.theta_des).abs() <= REACHED;
        arm_ok && base_ok && (self.state.gripper - kp.gripper).abs() <= REACHED
    }

    fn advance_playback(&mut self) {
        let Some(pb) = self.playback.as_ref() else {
            return;
        };
        let kp = pb.keypoints[pb.index];
        if !self.keypoint_reached(&kp) {
            return;
        }
        let dt = self.opts.dt;
        let pb = self.playback.as_mut().expect("checked above");
        pb.dwell += dt;
        if pb.dwell + 1e-9 < kp.dwell_s {
            return;
        }
        pb.index += 1;
        pb.dwell = 0.0;
        if pb.index == pb.keypoints.len() {
            log::debug!("primitive {} done at t={:.2}", pb.primitive, self.state.time);
            self.playback = None;
            self.primitive_done = true;
        } else if let Err(e) = self.activate_keypoint() {
            log::warn!("keypoint activation failed: {e}");
        }
    }

    fn on_close(&mut self) -> Result<(), SimError> {
        if self.state.attached.is_some() {
            return Ok(());
        }
        let t = self.state.time;
        let tool = self.tool_in_world()?;
        match self.mission.phase {
            MissionPhase::UnloadGrip => {
                let heading = self.state.base.to_pose(self.scene.ground_z);
                let trunk = heading.compose(&self.state.frame_in_heading(&self.model, Frame::Joint(PITCH))?);
                let handle = trunk.transform_point(&self.scene.bin.translation);
                let err = (tool.translation - handle).norm();
                let success = err <= self.opts.handle_tolerance;
                if success {
                    self.attach(AttachedObject::Handle, &tool, handle, Vec3::z());
                }
                self.events.push(SimEvent::HandleGrip {
                    t,
                    success,
                    position_error: err,
                });
            }
            MissionPhase::Closing => {
                let mut best: Option<(usize, super::GraspCheck)> = None;
                for i in (0..self.bottles.len()).filter(|i| self.is_free(*i)) {
                    let c = check_grasp(&tool, &self.bottles[i].bottle, &self.opts.grasp);
                    let better = match &best {
                        None => true,
                        Some((_, b)) => (c.success, -c.position_error) > (b.success, -b.position_error),
                    };
                    if better {
                        best = Some((i, c));
                    }
                }
                let (bottle, success, pe, ae) = match best {
                    Some((i, c)) => (Some(i), c.success, c.position_error, c.alignment_error_deg),
                    None => (None, false, f64::INFINITY, f64::INFINITY),
                };
                if let (Some(i), true) = (bottle, success) {
                    let b = self.bottles[i].bottle;
                    self.attach(AttachedObject::Bottle(i), &tool, b.center, b.axis);
                } else {
                    // Failed grasp: back to Rest and wait for a fresh detection.
                    self.pending_trigger = Some(Trigger::Rest);
                    self.stabilizer.reset();
                    self.estimate = None;
                }
                self.events.push(SimEvent::Grasp {
                    t,
                    bottle,
                    success,
                    position_error: if pe.is_finite() { pe } else { -1.0 },
                    alignment_error_deg: if ae.is_finite() { ae } else { -1.0 },
                });
            }
            _ => {}
        }
        Ok(())
    }

    fn attach(&mut self, object: AttachedObject, tool: &Pose, center: Vec3, axis: Vec3) {
        let inv = tool.inverse();
        self.state.attached = Some(Attachment {
            object,
            rel_center: inv.transform_point(&center),
            rel_axis: inv.transform_vector(&axis),
        });
    }

    fn on_open(&mut self) -> Result<(), SimError> {
        let Some(a) = self.state.attached else {
            return Ok(());
        };
        let t = self.state.time;
        match a.object {
            AttachedObject::Bottle(i) => {
                let world = self.bottle_world(i)?;
                self.bottles[i].bottle = world;
                if self.mission.phase == MissionPhase::Releasing {
                    self.bottles[i].loaded = true;
                    self.events.push(SimEvent::Load { t, bottle: i });
                } else {
                    self.events.push(SimEvent::Drop { t, bottle: i });
                }
            }
            AttachedObject::Handle => {
                let (basket_deg, door_deg) = bin_linkage(self.max_lift)?;
                self.events.push(SimEvent::BinClosed {
                    t,
                    max_lift: self.max_lift,
                    basket_deg,
                    door_deg,
                });
                self.handle_lift = 0.0;
                self.max_lift = 0.0;
            }
        }
        self.state.attached = None;
        Ok(())
    }

    fn update_handle(&mut self) -> Result<(), SimError> {
        let Some(Attachment {
            object: AttachedObject::Handle,
            rel_center,
            ..
        }) = self.state.attached
        else {
            return Ok(());
        };
        let trunk = self.state.frame_in_heading(&self.model, Frame::Joint(PITCH))?;
        let tool = self.state.frame_in_heading(&self.model, Frame::EndEffector)?;
        let handle = trunk.inverse().transform_point(&tool.transform_point(&rel_center));
        self.handle_lift = (handle.z - self.scene.bin.translation.z).clamp(0.0, HANDLE_TRAVEL);
        self.max_lift = self.max_lift.max(self.handle_lift);
        Ok(())
    }
}

/// IK settings for grasp tracking. Ground-level targets need the body to
/// crouch and pitch, so the base is regularized far less than in the
/// general-purpose defaults.
pub fn grasp_ik_config() -> IkConfig {
    let mut c = IkConfig::default();
    c.reg_weight[HEIGHT] = 0.05;
    c.reg_weight[PITCH] = 0.05;
    c
}

fn hold_targets(s: &RobotState) -> Targets {
    Targets {
        refs: BaseRefs {
            h_des: s.h,
            theta_des: s.theta,
        },
        arm: s.arm,
        gripper: s.gripper,
    }
}

/// Moves a heading-frame estimate taken at base pose `from` into the heading
/// frame at `to`.
fn reexpress(e: &BottleEstimate, from: &PlanarPose, to: &PlanarPose, ground_z: f64) -> BottleEstimate {
    if from == to {
        return *e;
    }
    let m = to.to_pose(ground_z).inverse().compose(&from.to_pose(ground_z));
    BottleEstimate {
        center: m.transform_point(&e.center),
        axis: m.transform_vector(&e.axis),
        ..*e
    }
}
