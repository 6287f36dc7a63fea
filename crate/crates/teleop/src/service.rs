//! WebSocket endpoint around one simulation loop.
//!
//! The loop task owns the [`Simulation`]. Sessions push parsed commands into
//! a mailbox that the loop drains once per tick, and receive serialized
//! snapshots from a broadcast channel. Nothing else crosses the boundary.

use std::collections::{BTreeMap, VecDeque};
use std::net::SocketAddr;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio::time::{Instant, MissedTickBehavior};
use tokio_tungstenite::tungstenite::{Message, Utf8Bytes};

use litterbot_core::mission::{PrimitiveLibrary, Trigger};
use litterbot_core::sim::runtime::SimEvent;
use litterbot_core::sim::{BaseCmd, SceneConfig, SimError, SimOptions, Simulation, TickInput};
use litterbot_core::ChainModel;

use crate::protocol::{CommandMessage, ProtocolError, ServerMessage, StateSnapshot};

#[derive(Debug, thiserror::Error)]
pub enum TeleopError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub snapshot_hz: f64,
    /// Velocity is zeroed after this long without a `cmd_vel`.
    pub watchdog: Duration,
    /// Attach the latest depth raster to every snapshot.
    pub stream_depth: bool,
    /// Number of recent events carried in each snapshot.
    pub event_window: usize,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            snapshot_hz: 20.0,
            watchdog: Duration::from_millis(500),
            stream_depth: false,
            event_window: 32,
        }
    }
}

/// Everything needed to (re)build the simulation.
#[derive(Debug, Clone)]
pub struct World {
    pub model: ChainModel,
    pub lib: PrimitiveLibrary,
    pub opts: SimOptions,
    /// Scenes selectable with `set_scene`.
    pub scenes: BTreeMap<String, SceneConfig>,
    pub initial: String,
}

impl World {
    /// Catalog with `initial` plus the built-in `empty` and `workspace`
    /// scenes.
    pub fn new(initial: SceneConfig, model: ChainModel, lib: PrimitiveLibrary, opts: SimOptions) -> Self {
        let mut scenes = BTreeMap::new();
        scenes.insert("empty".to_string(), SceneConfig::default());
        scenes.insert("workspace".to_string(), SceneConfig::spawn_in_workspace(initial.seed));
        scenes.insert("initial".to_string(), initial);
        Self {
            model,
            lib,
            opts,
            scenes,
            initial: "initial".into(),
        }
    }

    fn build(&self, name: &str) -> Result<Simulation, SimError> {
        let scene = self
            .scenes
            .get(name)
            .ok_or_else(|| SimError::InvalidScene(format!("unknown scene {name:?}")))?;
        Simulation::new(scene.clone(), &self.model, self.lib.clone(), self.opts.clone())
    }
}

struct Inbound {
    msg: CommandMessage,
    reply: mpsc::UnboundedSender<Utf8Bytes>,
}

/// A running server.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    join: tokio::task::JoinHandle<()>,
}

impl ServerHandle {
    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = self.join.await;
    }
}

/// Binds `bind` and serves in the background.
pub async fn spawn(bind: &str, mut world: World, cfg: ServeConfig) -> Result<ServerHandle, TeleopError> {
    world.opts.keep_depth |= cfg.stream_depth;
    let listener = TcpListener::bind(bind).await?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel();
    let mut sim = world.build(&world.initial)?;
    let _ = sim.take_events();
    let join = tokio::spawn(async move {
        if let Err(e) = run(listener, world, sim, cfg, rx).await {
            log::error!("teleop server stopped: {e}");
        }
    });
    log::info!("teleop listening on ws://{addr}");
    Ok(ServerHandle {
        addr,
        shutdown: Some(tx),
        join,
    })
}

/// Serves until `shutdown` fires.
pub async fn run(
    listener: TcpListener,
    world: World,
    sim: Simulation,
    cfg: ServeConfig,
    shutdown: oneshot::Receiver<()>,
) -> Result<(), TeleopError> {
    let (mail_tx, mail_rx) = mpsc::unbounded_channel::<Inbound>();
    let (snap_tx, _) = broadcast::channel::<Utf8Bytes>(64);
    let (stop_tx, _) = broadcast::channel::<()>(1);

    let sim_task = tokio::spawn(sim_loop(world, sim, cfg, mail_rx, snap_tx.clone(), stop_tx.subscribe()));
    let mut shutdown = shutdown;
    loop {
        tokio::select! {
            _ = &mut shutdown => break,
            accepted = listener.accept() => {
                let (stream, peer) = match accepted {
                    Ok(a) => a,
                    Err(e) => {
                        log::warn!("accept failed: {e}");
                        continue;
                    }
                };
                let mail = mail_tx.clone();
                let snaps = snap_tx.subscribe();
                let stop = stop_tx.subscribe();
                tokio::spawn(async move {
                    log::info!("session {peer} opened");
                    session(stream, mail, snaps, stop).await;
                    log::info!("session {peer} closed");
                });
            }
        }
    }
    let _ = stop_tx.send(());
    let _ = sim_task.await;
    Ok(())
}

fn encode(msg: &ServerMessage) -> Utf8Bytes {
    Utf8Bytes::from(serde_json::to_string(msg).expect("server messages serialize"))
}

fn error_reply(detail: impl Into<String>) -> Utf8Bytes {
    encode(&ServerMessage::Error { detail: detail.into() })
}

async fn sim_loop(
    world: World,
    mut sim: Simulation,
    cfg: ServeConfig,
    mut mail: mpsc::UnboundedReceiver<Inbound>,
    snaps: broadcast::Sender<Utf8Bytes>,
    mut stop: broadcast::Receiver<()>,
) {
    let dt = sim.options().dt;
    let mut interval = tokio::time::interval(Duration::from_secs_f64(dt));
    interval.set_missed_tick_behavior(MissedTickBehavior::Burst);
    let per_snapshot = ((1.0 / (cfg.snapshot_hz * dt)).round() as u64).max(1);
    let mut scene = world.initial.clone();
    let mut last_cmd = BaseCmd::default();
    let mut last_cmd_at: Option<Instant> = None;
    let mut triggers: VecDeque<Trigger> = VecDeque::new();
    let mut recent: VecDeque<SimEvent> = VecDeque::new();
    let mut n: u64 = 0;

    loop {
        tokio::select! {
            _ = stop.recv() => break,
            _ = interval.tick() => {}
        }
        while let Ok(Inbound { msg, reply }) = mail.try_recv() {
            match msg {
                CommandMessage::CmdVel { vx, vy, wz } => {
                    last_cmd = BaseCmd { vx, vy, wz };
                    last_cmd_at = Some(Instant::now());
                }
                CommandMessage::Trigger { action } => triggers.push_back(action),
                CommandMessage::SetScene { scene: name } => match world.build(&name) {
                    Ok(mut fresh) => {
                        let _ = fresh.take_events();
                        sim = fresh;
                        scene = name;
                        triggers.clear();
                        recent.clear();
                    }
                    Err(e) => {
                        let _ = reply.send(error_reply(e.to_string()));
                    }
                },
            }
        }
        let alive = last_cmd_at.is_some_and(|t| t.elapsed() <= cfg.watchdog);
        let input = TickInput {
            cmd_vel: if alive { last_cmd } else { BaseCmd::default() },
            trigger: triggers.pop_front(),
        };
        if let Err(e) = sim.tick(&input) {
            log::error!("sim tick failed: {e}");
        }
        for e in sim.take_events() {
            if matches!(e, SimEvent::Perception { .. }) {
                continue;
            }
            if recent.len() == cfg.event_window {
                recent.pop_front();
            }
            recent.push_back(e);
        }
        n += 1;
        if n % per_snapshot == 0 && snaps.receiver_count() > 0 {
            recent.make_contiguous();
            let snap = StateSnapshot::capture(&sim, &scene, recent.as_slices().0, cfg.stream_depth);
            let _ = snaps.send(encode(&ServerMessage::State(Box::new(snap))));
        }
    }
}

async fn session(
    stream: TcpStream,
    mail: mpsc::UnboundedSender<Inbound>,
    mut snaps: broadcast::Receiver<Utf8Bytes>,
    mut stop: broadcast::Receiver<()>,
) {
    let ws = match tokio_tungstenite::accept_async(stream).await {
        Ok(ws) => ws,
        Err(e) => {
            log::debug!("handshake failed: {e}");
            return;
        }
    };
    let (mut sink, mut source) = ws.split();
    let (reply_tx, mut reply_rx) = mpsc::unbounded_channel::<Utf8Bytes>();
    loop {
        let out = tokio::select! {
            _ = stop.recv() => break,
            incoming = source.next() => {
                match incoming {
                    Some(Ok(Message::Text(text))) => match CommandMessage::parse(text.as_str()) {
                        Ok(msg) => {
                            if mail.send(Inbound { msg, reply: reply_tx.clone() }).is_err() {
                                break;
                            }
                            None
                        }
                        Err(e) => Some(error_reply(e.to_string())),
                    },
                    Some(Ok(Message::Binary(_))) => Some(error_reply(ProtocolError::Binary.to_string())),
                    Some(Ok(Message::Close(_))) | None => break,
                    Some(Ok(_)) => None,
                    Some(Err(e)) => {
                        log::debug!("session read error: {e}");
                        break;
                    }
                }
            }
            snap = snaps.recv() => match snap {
                Ok(s) => Some(s),
                Err(broadcast::error::RecvError::Lagged(k)) => {
                    log::debug!("session lagged {k} snapshots");
                    None
                }
                Err(broadcast::error::RecvError::Closed) => break,
            },
            reply = reply_rx.recv() => reply,
        };
        if let Some(text) = out {
            if sink.send(Message::Text(text)).await.is_err() {
                break;
            }
        }
    }
    let _ = sink.close().await;
}
