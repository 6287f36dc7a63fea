use std::path::Path;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::CommandFactory;
use serde::Serialize;

use litterbot_core::ik::{ik_solve, IkConfig, Task};
use litterbot_core::kinematics::ready_pose;
use litterbot_core::locomotion::rewards::{RewardConfig, RewardSample};
use litterbot_core::mission::{Command as MissionCommand, Mission, MissionEvents, MissionPhase, PrimitiveLibrary};
use litterbot_core::perception::io::{read_depth, read_mask};
use litterbot_core::perception::{
    estimate_axis_3d, refine_mask, BottleEstimate, EstimateFrame, PerceptionError, Stabilizer,
};
use litterbot_core::sim::{run_batch, run_episode, EpisodeConfig, SceneConfig, SimOptions};
use litterbot_core::{ChainModel, Frame, Intrinsics, JointVector, Pose, Vec3};
use litterbot_teleop::{ServeConfig, World};

use crate::args::*;
use crate::output::Out;

pub fn run(cli: &Cli) -> Result<()> {
    let out = Out::new(cli.pretty);
    match &cli.command {
        Command::Perceive(a) => perceive(a, &out),
        Command::Ik(IkCommand::Solve(a)) => ik(a, &out),
        Command::Rewards(RewardsCommand::Eval(a)) => rewards(a, &out),
        Command::Mission(crate::args::MissionCommand::Trace(a)) => trace(a, &out),
        Command::Sim(SimCommand::Run(a)) => sim_run(a, &out),
        Command::Serve(a) => serve(a, &out),
        Command::Eval(EvalCommand::Batch(a)) => eval_batch(a, &out),
    }
}

/// Bad argument values are usage errors: print and exit 2.
fn usage(msg: impl std::fmt::Display) -> ! {
    Cli::command().error(clap::error::ErrorKind::InvalidValue, msg).exit()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_model(path: Option<&Path>) -> Result<ChainModel> {
    Ok(match path {
        Some(p) => ChainModel::from_file(p).with_context(|| format!("loading model {}", p.display()))?,
        None => ChainModel::nominal(),
    })
}

struct Loaded {
    model: ChainModel,
    lib: PrimitiveLibrary,
    opts: SimOptions,
}

fn load_world(w: &WorldArgs) -> Result<Loaded> {
    let model = load_model(w.model.as_deref())?;
    let lib = match &w.primitives {
        Some(p) => PrimitiveLibrary::from_file(p, &model).with_context(|| format!("loading {}", p.display()))?,
        None => PrimitiveLibrary::nominal(),
    };
    let mut opts: SimOptions = match &w.sim_config {
        Some(p) => read_json(p)?,
        None => SimOptions::default(),
    };
    opts.exec = w.exec.into();
    Ok(Loaded { model, lib, opts })
}

fn perceive(a: &PerceiveArgs, out: &Out) -> Result<()> {
    let mask = read_mask(&a.mask)?;
    let depth = read_depth(&a.depth)?;
    let k: Intrinsics = read_json(&a.intrinsics)?;
    k.validate()?;
    let mask = if a.raw_mask { mask } else { refine_mask(&mask) };
    let raw = match estimate_axis_3d(&mask, &depth, &k) {
        Ok(e) => e,
        Err(PerceptionError::EmptyMask) => {
            log::warn!("mask is empty after refinement");
            BottleEstimate::invalid(EstimateFrame::Camera)
        }
        Err(e) => return Err(e.into()),
    };
    let mut stab = Stabilizer::new(a.beta).unwrap_or_else(|e| usage(e));
    if let Some(p) = &a.prev {
        let prev: BottleEstimate = read_json(p)?;
        stab.prev = prev.valid.then_some(prev);
    }
    out.record(&stab.update(raw))
}

#[derive(Serialize)]
struct IkRecord {
    q: Vec<f64>,
    converged: bool,
    residual: f64,
    iterations: usize,
    /// Reached end-effector pose: x, y, z, qw, qx, qy, qz.
    ee: [f64; 7],
}

fn ik(a: &IkSolveArgs, out: &Out) -> Result<()> {
    let model = load_model(a.model.as_deref())?;
    let cfg: IkConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => IkConfig::default(),
    };
    let t = &a.target;
    let target = match t.len() {
        3 | 7 => Vec3::new(t[0], t[1], t[2]),
        n => usage(format!("--target takes 3 or 7 values, got {n}")),
    };
    let pose = if t.len() == 7 {
        if t[3..].iter().all(|x| *x == 0.0) {
            usage("--target quaternion is zero");
        }
        Pose::from_quaternion(t[3], t[4], t[5], t[6], target)
    } else {
        Pose::from_translation(target)
    };
    let q0 = match &a.q0 {
        Some(v) if v.len() == model.dof() => JointVector::from_column_slice(v),
        Some(v) => usage(format!("--q0 takes {} values, got {}", model.dof(), v.len())),
        None => ready_pose(),
    };
    let mut p = cfg.problem(&model, pose, ready_pose())?;
    if t.len() == 3 {
        p.tasks[0] = Task::position(target, cfg.ee_gain);
    }
    if a.freeze_base {
        p = p.freeze(&[0, 1]);
    }
    let sol = ik_solve(&p, &q0)?;
    let ee = model.forward_kinematics(&sol.q, Frame::EndEffector)?;
    let [w, x, y, z] = ee.quaternion();
    let tr = ee.translation;
    out.record(&IkRecord {
        q: sol.q.iter().copied().collect(),
        converged: sol.converged,
        residual: sol.residual,
        iterations: sol.iterations,
        ee: [tr.x, tr.y, tr.z, w, x, y, z],
    })
}

#[derive(Serialize)]
struct RewardRecord {
    terms: std::collections::BTreeMap<String, f64>,
    total: f64,
}

fn rewards(a: &RewardsEvalArgs, out: &Out) -> Result<()> {
    let sample: RewardSample = read_json(&a.sample)?;
    let cfg: RewardConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => RewardConfig::default(),
    };
    let (terms, total) = sample.evaluate(&cfg)?;
    out.record(&RewardRecord { terms, total })
}

#[derive(Serialize)]
struct TraceRecord {
    step: usize,
    from: MissionPhase,
    to: MissionPhase,
    command: Option<MissionCommand>,
}

fn trace(a: &MissionTraceArgs, out: &Out) -> Result<()> {
    let events: Vec<MissionEvents> = read_json(&a.events)?;
    let mut m = Mission {
        phase: MissionPhase::Rest,
        auto_grasp: a.auto_grasp,
    };
    for (step, ev) in events.iter().enumerate() {
        let from = m.phase;
        let command = m.step(ev);
        out.record(&TraceRecord {
            step,
            from,
            to: m.phase,
            command,
        })?;
    }
    Ok(())
}

fn scene_or_spawn(path: Option<&Path>, seed: Option<u64>) -> Result<SceneConfig> {
    Ok(match path {
        Some(p) => {
            let mut s = SceneConfig::from_file(p).with_context(|| format!("loading scene {}", p.display()))?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            s
        }
        None => SceneConfig::spawn_in_workspace(seed.unwrap_or(0)),
    })
}

fn sim_run(a: &SimRunArgs, out: &Out) -> Result<()> {
    if !a.headless {
        log::info!("no viewer is built in; running headless");
    }
    let w = load_world(&a.world)?;
    let scene = scene_or_spawn(a.scene.as_deref(), a.seed)?;
    let mut cfg: EpisodeConfig = match &a.episode {
        Some(p) => read_json(p)?,
        None => EpisodeConfig::default(),
    };
    if let Some(t) = a.max_time {
        cfg.max_time = t;
    }
    if !(cfg.max_time.is_finite() && cfg.max_time > 0.0) {
        usage(format!("--max-time must be positive, got {}", cfg.max_time));
    }
    let report = run_episode(&scene, &w.model, &w.lib, &w.opts, &cfg)?;
    if a.summary_only || out.pretty() {
        out.record(&report.summary)
    } else {
        out.raw_lines(&report.to_jsonl())
    }
}

fn scene_dir(dir: &Path) -> Result<Vec<(String, SceneConfig)>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let s = SceneConfig::from_file(&p).with_context(|| format!("loading scene {}", p.display()))?;
            Ok((name, s))
        })
        .collect()
}

fn eval_batch(a: &EvalBatchArgs, out: &Out) -> Result<()> {
    let w = load_world(&a.world)?;
    let scenes: Vec<SceneConfig> = match &a.scenes {
        Some(d) => {
            let s: Vec<_> = scene_dir(d)?.into_iter().map(|(_, s)| s).collect();
            if s.is_empty() {
                bail!("no scene files in {}", d.display());
            }
            s
        }
        None => Vec::new(),
    };
    let cfg = EpisodeConfig {
        max_time: a.max_time,
        ..EpisodeConfig::default()
    };
    let mut opts = w.opts.clone();
    // Episodes already run in parallel; keep each one sequential inside.
    opts.exec = litterbot_core::Exec::Sequential;
    let (summary, reports) = run_batch(&scenes, a.n, a.seed, &w.model, &w.lib, &opts, &cfg, w.opts.exec)?;
    if a.episodes {
        for r in &reports {
            out.record(&r.summary)?;
        }
    }
    out.record(&summary)
}

#[derive(Serialize)]
struct Listening {
    listening: String,
    scenes: Vec<String>,
}

fn serve(a: &ServeArgs, out: &Out) -> Result<()> {
    let w = load_world(&a.world)?;
    let initial = scene_or_spawn(a.scene.as_deref(), a.seed)?;
    let mut world = World::new(initial, w.model, w.lib, w.opts);
    if let Some(d) = &a.scenes {
        world.scenes.extend(scene_dir(d)?);
    }
    let cfg = ServeConfig {
        stream_depth: a.stream_depth,
        ..ServeConfig::default()
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let names = world.scenes.keys().cloned().collect();
        let handle = litterbot_teleop::spawn(&a.bind, world, cfg).await?;
        out.record(&Listening {
            listening: format!("ws://{}", handle.addr),
            scenes: names,
        })?;
        match a.duration {
            Some(s) => tokio::time::sleep(Duration::from_secs_f64(s.max(0.0))).await,
            None => tokio::signal::ctrl_c().await?,
        }
        handle.shutdown().await;
        Ok(())
    })
}
