use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "litterbot", version, about = "Quadruped litter-collection stack")]
pub struct Cli {
    /// Render human-readable tables instead of JSON lines.
    #[arg(long, global = true)]
    pub pretty: bool,

    /// More log output on stderr (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate a bottle pose from a mask, a depth raster and intrinsics.
    Perceive(PerceiveArgs),
    /// Inverse kinematics.
    #[command(subcommand)]
    Ik(IkCommand),
    /// Locomotion rewards.
    #[command(subcommand)]
    Rewards(RewardsCommand),
    /// Mission state machine.
    #[command(subcommand)]
    Mission(MissionCommand),
    /// Simulator.
    #[command(subcommand)]
    Sim(SimCommand),
    /// Serve the simulator over WebSocket for teleoperation.
    Serve(ServeArgs),
    /// Batch evaluation.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Debug, Args)]
pub struct PerceiveArgs {
    /// Binary PGM (P5) mask, foreground 255.
    #[arg(long)]
    pub mask: PathBuf,
    /// Depth raster (DPTH format).
    #[arg(long)]
    pub depth: PathBuf,
    /// Intrinsics JSON: fx, fy, cx, cy, width, height.
    #[arg(long)]
    pub intrinsics: PathBuf,
    /// Previous estimate (as printed by this command) to smooth against.
    #[arg(long)]
    pub prev: Option<PathBuf>,
    #[arg(long, default_value_t = litterbot_core::perception::DEFAULT_BETA)]
    pub beta: f64,
    /// Skip the morphological clean-up of the mask.
    #[arg(long)]
    pub raw_mask: bool,
}

#[derive(Debug, Subcommand)]
pub enum IkCommand {
    /// Solve for a target end-effector pose.
    Solve(IkSolveArgs),
}

#[derive(Debug, Args)]
pub struct IkSolveArgs {
    /// Chain model JSON; the built-in model when omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Task weights and solver settings JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// x,y,z,qw,qx,qy,qz in the world frame, or just x,y,z for a
    /// position-only target.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub target: Vec<f64>,
    /// Initial configuration (h, pitch, six arm joints); the ready pose when
    /// omitted.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub q0: Option<Vec<f64>>,
    /// Hold body height and pitch at their initial values.
    #[arg(long)]
    pub freeze_base: bool,
}

#[derive(Debug, Subcommand)]
pub enum RewardsCommand {
    /// Evaluate the 13 reward terms for one sample.
    Eval(RewardsEvalArgs),
}

#[derive(Debug, Args)]
pub struct RewardsEvalArgs {
    #[arg(long)]
    pub sample: PathBuf,
    /// Weights and gait settings JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum MissionCommand {
    /// Feed a list of event records through the machine and print each step.
    Trace(MissionTraceArgs),
}

#[derive(Debug, Args)]
pub struct MissionTraceArgs {
    /// JSON array of {detection_valid, ik_converged, primitive_done,
    /// operator_trigger}.
    #[arg(long)]
    pub events: PathBuf,
    /// Start a grasp on any valid detection without a grasp trigger.
    #[arg(long)]
    pub auto_grasp: bool,
}

#[derive(Debug, Subcommand)]
pub enum SimCommand {
    /// Run one episode and print its report.
    Run(SimRunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExecMode {
    Sequential,
    Parallel,
}

impl From<ExecMode> for litterbot_core::Exec {
    fn from(m: ExecMode) -> Self {
        match m {
            ExecMode::Sequential => litterbot_core::Exec::Sequential,
            ExecMode::Parallel => litterbot_core::Exec::Parallel,
        }
    }
}

#[derive(Debug, Args)]
pub struct WorldArgs {
    /// Chain model JSON; the built-in model when omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Primitive library JSON; the built-in library when omitted.
    #[arg(long)]
    pub primitives: Option<PathBuf>,
    /// Simulator options JSON.
    #[arg(long)]
    pub sim_config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "parallel")]
    pub exec: ExecMode,
}

#[derive(Debug, Args)]
pub struct SimRunArgs {
    /// Scene JSON; a bottle is spawned in the grasp workspace when omitted.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// No viewer. The only mode; accepted for script compatibility.
    #[arg(long)]
    pub headless: bool,
    /// Overrides the scene seed; also seeds the spawned bottle.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Simulated seconds; 60 unless the episode config says otherwise.
    #[arg(long)]
    pub max_time: Option<f64>,
    /// Episode config JSON (policy, logging); flags above override it.
    #[arg(long)]
    pub episode: Option<PathBuf>,
    /// Print only the summary record.
    #[arg(long)]
    pub summary_only: bool,
    #[command(flatten)]
    pub world: WorldArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Scene JSON loaded as "initial"; a spawned bottle when omitted.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Extra scenes selectable with set_scene, named by file stem.
    #[arg(long)]
    pub scenes: Option<PathBuf>,
    #[arg(long, env = "LITTERBOT_BIND", default_value = "127.0.0.1:8765")]
    pub bind: String,
    /// Attach the latest depth raster to every snapshot.
    #[arg(long)]
    pub stream_depth: bool,
    /// Overrides the scene seed; also seeds the spawned bottle.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Stop after this many seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    #[command(flatten)]
    pub world: WorldArgs,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Run seeded episodes headlessly and print an evaluation summary.
    Batch(EvalBatchArgs),
}

#[derive(Debug, Args)]
pub struct EvalBatchArgs {
    /// Directory of scene JSON files, cycled in name order; spawned scenes
    /// when omitted.
    #[arg(long)]
    pub scenes: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 60.0)]
    pub max_time: f64,
    /// Print each episode summary before the batch summary.
    #[arg(long)]
    pub episodes: bool,
    #[command(flatten)]
    pub world: WorldArgs,
}
