//! Bridge server for the simulated robot.
//!
//! One simulation task owns the [`WorldModel`]. Connection tasks talk to it
//! only through a command channel and receive frames through their own bounded
//! outbox, so a slow client loses scans instead of stalling the simulation.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot};
use tokio::task::JoinSet;
use tokio_tungstenite::tungstenite::Message;

use crate::msgs::{
    self, Header, NavMessage, NavPath, OccupancyGrid, Odometry, Pose, PoseMessage, PoseStamped,
    PoseWithCovariance, PoseWithCovarianceStamped, Time, TwistWithCovariance,
};
use crate::proto::{decode_envelope, encode_envelope, Op, ProtocolEnvelope};
use crate::queue::{DropQueue, Perishable};

use super::world::{PlanarPose, WorldModel, WorldParams};
use super::SimError;

pub const TOPIC_MAP: &str = "/map";
pub const TOPIC_SCAN: &str = "/scan";
pub const TOPIC_ODOM: &str = "/odom";
pub const TOPIC_AMCL: &str = "/amcl_pose";
pub const TOPIC_PLAN: &str = "/global_plan";
pub const TOPIC_GOAL: &str = "/move_base_simple/goal";
pub const TOPIC_INITIAL_POSE: &str = "/initialpose";
/// Fixed-step mode only: `std_msgs/UInt32 {data: n}` advances the simulation n steps.
pub const TOPIC_SIM_STEP: &str = "/sim/step";
/// Fixed-step mode only: simulation time, published after every step request.
pub const TOPIC_CLOCK: &str = "/clock";
pub const CLOCK_TYPE: &str = "rosgraph_msgs/Clock";
pub const STEP_TYPE: &str = "std_msgs/UInt32";

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind: SocketAddr,
    pub map: OccupancyGrid,
    pub world: WorldParams,
    pub start: PlanarPose,
    pub seed: u64,
    /// Rate of `/odom` and `/amcl_pose`.
    pub pose_rate: f64,
    /// `Some(dt)`: lockstep mode, time advances only on `/sim/step`.
    pub fixed_step: Option<f64>,
    pub outbox_capacity: usize,
}

impl ServerConfig {
    pub fn new(map: OccupancyGrid, start: PlanarPose) -> Self {
        Self {
            bind: SocketAddr::from(([127, 0, 0, 1], 0)),
            map,
            world: WorldParams::default(),
            start,
            seed: 0,
            pose_rate: 10.0,
            fixed_step: None,
            outbox_capacity: 64,
        }
    }
}

/// Counters shared with the running server.
#[derive(Debug, Default)]
pub struct ServerStats {
    pub scans_published: AtomicU64,
    pub maps_sent: AtomicU64,
    pub plans_published: AtomicU64,
    pub bad_frames: AtomicU64,
    pub frames_dropped: AtomicU64,
}

#[derive(Debug, Clone)]
struct Outbound {
    text: Arc<str>,
    rank: u8,
}

impl Perishable for Outbound {
    fn perishability(&self) -> u8 {
        self.rank
    }
}

enum Command {
    Connect { id: u64, outbox: Arc<DropQueue<Outbound>> },
    Disconnect { id: u64 },
    Subscribe { id: u64, topic: String, throttle_ms: u64 },
    Unsubscribe { id: u64, topic: String },
    Publish { topic: String, msg: Value },
}

pub struct RunningServer {
    addr: SocketAddr,
    stats: Arc<ServerStats>,
    shutdown: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<()>,
}

impl RunningServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("ws://{}", self.addr)
    }

    pub fn stats(&self) -> &ServerStats {
        &self.stats
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if !self.task.is_finished() {
            let _ = (&mut self.task).await;
        }
    }

    /// Resolves when the server stops on its own.
    pub async fn wait(&mut self) {
        if !self.task.is_finished() {
            let _ = (&mut self.task).await;
        }
    }
}

/// Binds, starts the simulation and accept loops, and returns immediately.
pub async fn serve(config: ServerConfig) -> Result<RunningServer, SimError> {
    let world = WorldModel::new(config.map.clone(), config.start, config.world.clone(), config.seed)?;
    if let Some(dt) = config.fixed_step {
        if !(dt > 0.0) {
            return Err(SimError::BadParam("fixed step must be > 0".into()));
        }
    }
    if !(config.pose_rate > 0.0) {
        return Err(SimError::BadParam("pose rate must be > 0".into()));
    }
    let listener = TcpListener::bind(config.bind)
        .await
        .map_err(|e| SimError::BindFailed(format!("{}: {e}", config.bind)))?;
    let addr = listener.local_addr().map_err(|e| SimError::BindFailed(e.to_string()))?;
    let stats = Arc::new(ServerStats::default());
    let (cmd_tx, cmd_rx) = mpsc::unbounded_channel();
    let (shutdown_tx, shutdown_rx) = oneshot::channel();

    let sim = SimLoop::new(world, &config, stats.clone());
    let capacity = config.outbox_capacity;
    let task_stats = stats.clone();
    let task = tokio::spawn(async move {
        let mut conns = JoinSet::new();
        let mut sim_task = tokio::spawn(sim.run(cmd_rx));
        let mut shutdown_rx = shutdown_rx;
        let mut next_id = 0u64;
        loop {
            tokio::select! {
                _ = &mut shutdown_rx => break,
                _ = &mut sim_task => break,
                accepted = listener.accept() => match accepted {
                    Ok((stream, peer)) => {
                        next_id += 1;
                        let _ = stream.set_nodelay(true);
                        conns.spawn(handle_connection(stream, peer, next_id, cmd_tx.clone(), capacity, task_stats.clone()));
                    }
                    Err(e) => log::warn!("accept failed: {e}"),
                },
                Some(_) = conns.join_next(), if !conns.is_empty() => {}
            }
        }
        conns.abort_all();
        sim_task.abort();
    });

    Ok(RunningServer {
        addr,
        stats,
        shutdown: Some(shutdown_tx),
        task,
    })
}

async fn handle_connection(
    stream: TcpStream,
    peer: SocketAddr,
    id: u64,
    cmd: mpsc::UnboundedSender<Command>,
    capacity: usize,
    stats: Arc<ServerStats>,
) {
    let ws = match tokio_tungstenite::accept_async(stream).await {
        Ok(ws) => ws,
        Err(e) => {
            log::debug!("handshake with {peer} failed: {e}");
            return;
        }
    };
    log::info!("client {id} connected from {peer}");
    let (mut sink, mut source) = ws.split();
    let outbox = Arc::new(DropQueue::new(capacity));
    if cmd.send(Command::Connect { id, outbox: outbox.clone() }).is_err() {
        return;
    }

    let writer_box = outbox.clone();
    let mut writer = tokio::spawn(async move {
        loop {
            writer_box.ready().await;
            let batch = writer_box.drain();
            if batch.is_empty() && writer_box.is_closed() {
                break;
            }
            for item in batch {
                if sink.send(Message::Text(item.text.to_string())).await.is_err() {
                    return;
                }
            }
        }
        let _ = sink.send(Message::Close(None)).await;
    });

    loop {
        tokio::select! {
            frame = source.next() => {
                let Some(Ok(frame)) = frame else { break };
                match frame {
                    Message::Text(text) => match decode_envelope(text.as_bytes()) {
                        Ok(env) => {
                            if let Some(c) = to_command(id, env) {
                                if cmd.send(c).is_err() {
                                    break;
                                }
                            }
                        }
                        Err(e) => {
                            log::debug!("client {id}: dropping frame: {e}");
                            stats.bad_frames.fetch_add(1, Ordering::Relaxed);
                        }
                    },
                    Message::Close(_) => break,
                    _ => {}
                }
            }
            _ = &mut writer => break,
        }
    }
    let _ = cmd.send(Command::Disconnect { id });
    outbox.close();
    stats.frames_dropped.fetch_add(outbox.dropped(), Ordering::Relaxed);
    log::info!("client {id} disconnected");
}

fn to_command(id: u64, env: ProtocolEnvelope) -> Option<Command> {
    match env.op() {
        Op::Subscribe => Some(Command::Subscribe {
            id,
            topic: env.topic().to_string(),
            throttle_ms: env.throttle_rate().unwrap_or(0),
        }),
        Op::Unsubscribe => Some(Command::Unsubscribe { id, topic: env.topic().to_string() }),
        Op::Publish => {
            let topic = env.topic().to_string();
            Some(Command::Publish { topic, msg: env.into_msg().unwrap_or(Value::Null) })
        }
        Op::Advertise | Op::Unadvertise => None,
    }
}

struct Subscription {
    throttle: f64,
    last_sent: Option<f64>,
}

struct Client {
    outbox: Arc<DropQueue<Outbound>>,
    subs: HashMap<String, Subscription>,
    map_revision_sent: Option<u64>,
}

struct SimLoop {
    world: WorldModel,
    clients: HashMap<u64, Client>,
    stats: Arc<ServerStats>,
    fixed_step: Option<f64>,
    pose_period: f64,
    scan_period: f64,
    next_scan_at: f64,
    next_pose_at: f64,
    map_revision: u64,
    map_frame: Arc<str>,
    seq: HashMap<&'static str, u32>,
}

fn rank_of(topic: &str) -> u8 {
    match topic {
        TOPIC_SCAN => 2,
        TOPIC_ODOM | TOPIC_AMCL => 1,
        _ => 0,
    }
}

fn planar_of(p: &Pose) -> PlanarPose {
    PlanarPose::new(p.position.x, p.position.y, p.yaw())
}

impl SimLoop {
    fn new(world: WorldModel, config: &ServerConfig, stats: Arc<ServerStats>) -> Self {
        let mut grid = world.grid().clone();
        grid.header = Header::new(1, 0.0, "map");
        let map_frame = encode_publish(TOPIC_MAP, NavMessage::OccupancyGrid(grid).to_json());
        SimLoop {
            scan_period: 1.0 / world.params().scan_rate,
            world,
            clients: HashMap::new(),
            stats,
            fixed_step: config.fixed_step,
            pose_period: 1.0 / config.pose_rate,
            next_scan_at: 0.0,
            next_pose_at: 0.0,
            map_revision: 1,
            map_frame,
            seq: HashMap::new(),
        }
    }

    async fn run(mut self, mut rx: mpsc::UnboundedReceiver<Command>) {
        let loop_period = Duration::from_secs_f64((0.25 * self.scan_period.min(self.pose_period)).clamp(0.001, 0.01));
        let mut interval = tokio::time::interval(loop_period);
        interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
        let started = Instant::now();
        let wall = self.fixed_step.is_none();
        loop {
            tokio::select! {
                biased;
                cmd = rx.recv() => match cmd {
                    Some(c) => self.handle(c),
                    None => break,
                },
                _ = interval.tick(), if wall => {
                    let now = started.elapsed().as_secs_f64();
                    let dt = now - self.world.sim_time();
                    if dt > 0.0 {
                        self.advance(dt);
                    }
                }
            }
        }
    }

    fn next_seq(&mut self, topic: &'static str) -> u32 {
        let s = self.seq.entry(topic).or_insert(0);
        *s = s.wrapping_add(1);
        *s
    }

    fn has_subscribers(&self, topic: &str) -> bool {
        self.clients.values().any(|c| c.subs.contains_key(topic))
    }

    /// Sends one encoded frame to every subscriber of `topic`, honoring throttles.
    fn fan_out(&mut self, topic: &str, frame: &Arc<str>) {
        let now = self.world.sim_time();
        let rank = rank_of(topic);
        for c in self.clients.values_mut() {
            if let Some(sub) = c.subs.get_mut(topic) {
                if let Some(last) = sub.last_sent {
                    if now - last + 1e-9 < sub.throttle {
                        continue;
                    }
                }
                sub.last_sent = Some(now);
                c.outbox.push(Outbound { text: frame.clone(), rank });
            }
        }
    }

    fn publish(&mut self, topic: &'static str, msg: NavMessage) {
        if self.has_subscribers(topic) {
            let frame = encode_publish(topic, msg.to_json());
            self.fan_out(topic, &frame);
        }
    }

    fn advance(&mut self, dt: f64) {
        let t = self.world.sim_time() + dt;
        self.world.set_sim_time(t);
        self.world.step_motion(dt);
        if t + 1e-9 >= self.next_scan_at {
            // Scans are simulated whether or not anyone listens, keeping the noise stream fixed.
            let scan = self.world.simulate_scan();
            self.stats.scans_published.fetch_add(1, Ordering::Relaxed);
            self.publish(TOPIC_SCAN, NavMessage::LaserScan(scan));
            self.next_scan_at += self.scan_period;
            if self.next_scan_at <= t {
                self.next_scan_at = t + self.scan_period;
            }
        }
        if t + 1e-9 >= self.next_pose_at {
            self.publish_poses(None);
            self.next_pose_at += self.pose_period;
            if self.next_pose_at <= t {
                self.next_pose_at = t + self.pose_period;
            }
        }
    }

    fn odometry(&mut self) -> Odometry {
        let p = self.world.odometry_pose();
        Odometry {
            header: Header::new(self.next_seq(TOPIC_ODOM), self.world.sim_time(), "odom"),
            child_frame_id: "base_link".into(),
            pose: PoseWithCovariance {
                pose: Pose::planar(p.x, p.y, p.theta),
                ..Default::default()
            },
            twist: TwistWithCovariance::default(),
        }
    }

    fn amcl(&mut self) -> PoseWithCovarianceStamped {
        let p = self.world.robot();
        PoseWithCovarianceStamped {
            header: Header::new(self.next_seq(TOPIC_AMCL), self.world.sim_time(), "map"),
            pose: PoseWithCovariance {
                pose: Pose::planar(p.x, p.y, p.theta),
                ..Default::default()
            },
        }
    }

    /// Publishes odometry and localization, to everyone or to one client only.
    fn publish_poses(&mut self, only: Option<(u64, &str)>) {
        for topic in [TOPIC_ODOM, TOPIC_AMCL] {
            if let Some((_, t)) = only {
                if t != topic {
                    continue;
                }
            }
            if !self.has_subscribers(topic) {
                continue;
            }
            let msg = if topic == TOPIC_ODOM {
                NavMessage::Odometry(self.odometry())
            } else {
                NavMessage::Pose(PoseMessage::WithCovariance(self.amcl()))
            };
            let frame = encode_publish(topic, msg.to_json());
            match only {
                Some((id, _)) => {
                    if let Some(c) = self.clients.get(&id) {
                        c.outbox.push(Outbound { text: frame, rank: rank_of(topic) });
                    }
                }
                None => self.fan_out(topic, &frame),
            }
        }
    }

    fn send_latched_map(&mut self, id: u64) {
        let Some(c) = self.clients.get_mut(&id) else { return };
        if c.map_revision_sent == Some(self.map_revision) {
            return;
        }
        c.map_revision_sent = Some(self.map_revision);
        c.outbox.push(Outbound { text: self.map_frame.clone(), rank: 0 });
        self.stats.maps_sent.fetch_add(1, Ordering::Relaxed);
    }

    fn handle(&mut self, cmd: Command) {
        match cmd {
            Command::Connect { id, outbox } => {
                self.clients.insert(id, Client { outbox, subs: HashMap::new(), map_revision_sent: None });
            }
            Command::Disconnect { id } => {
                self.clients.remove(&id);
            }
            Command::Subscribe { id, topic, throttle_ms } => {
                let Some(c) = self.clients.get_mut(&id) else { return };
                if c.subs.contains_key(&topic) {
                    return;
                }
                c.subs.insert(topic.clone(), Subscription { throttle: throttle_ms as f64 / 1000.0, last_sent: None });
                match topic.as_str() {
                    TOPIC_MAP => self.send_latched_map(id),
                    TOPIC_ODOM => self.publish_poses(Some((id, TOPIC_ODOM))),
                    TOPIC_AMCL => self.publish_poses(Some((id, TOPIC_AMCL))),
                    TOPIC_CLOCK if self.fixed_step.is_some() => {
                        let frame = self.clock_frame();
                        if let Some(c) = self.clients.get(&id) {
                            c.outbox.push(Outbound { text: frame, rank: 0 });
                        }
                    }
                    _ => {}
                }
            }
            Command::Unsubscribe { id, topic } => {
                if let Some(c) = self.clients.get_mut(&id) {
                    c.subs.remove(&topic);
                    if topic == TOPIC_MAP {
                        // A later re-subscribe is a new subscriber and gets the latched map again.
                        c.map_revision_sent = None;
                    }
                }
            }
            Command::Publish { topic, msg } => self.handle_publish(&topic, msg),
        }
    }

    fn clock_frame(&self) -> Arc<str> {
        let t = Time::from_secs_f64(self.world.sim_time());
        encode_publish(TOPIC_CLOCK, json!({ "clock": t }))
    }

    fn handle_publish(&mut self, topic: &str, msg: Value) {
        match topic {
            TOPIC_GOAL => match msgs::parse_msg(msgs::POSE_STAMPED, &msg) {
                Ok(NavMessage::Pose(p)) => self.on_goal(planar_of(p.pose())),
                Ok(_) => {}
                Err(e) => log::warn!("bad goal: {e}"),
            },
            TOPIC_INITIAL_POSE => match msgs::parse_msg(msgs::POSE_WITH_COVARIANCE_STAMPED, &msg) {
                Ok(NavMessage::Pose(p)) => match self.world.teleport(planar_of(p.pose())) {
                    Ok(()) => self.publish_poses(None),
                    Err(e) => log::warn!("initial pose rejected: {e}"),
                },
                Ok(_) => {}
                Err(e) => log::warn!("bad initial pose: {e}"),
            },
            TOPIC_SIM_STEP => {
                let Some(dt) = self.fixed_step else {
                    log::warn!("{TOPIC_SIM_STEP} ignored: server is not in fixed-step mode");
                    return;
                };
                let n = msg.get("data").and_then(Value::as_u64).unwrap_or(1);
                for _ in 0..n {
                    self.advance(dt);
                }
                if self.has_subscribers(TOPIC_CLOCK) {
                    let frame = self.clock_frame();
                    self.fan_out(TOPIC_CLOCK, &frame);
                }
            }
            other => log::debug!("ignoring publish on {other}"),
        }
    }

    fn on_goal(&mut self, goal: PlanarPose) {
        let stamp = self.world.sim_time();
        let header = Header::new(self.next_seq(TOPIC_PLAN), stamp, "map");
        let poses = match self.world.set_goal(goal) {
            Ok(plan) => plan
                .waypoints
                .iter()
                .map(|&(x, y, th)| PoseStamped {
                    header: Header::new(0, stamp, "map"),
                    pose: Pose::planar(x, y, th),
                })
                .collect(),
            Err(e) => {
                // An empty plan tells listeners the goal was rejected.
                log::warn!("goal ({:.2}, {:.2}) rejected: {e}", goal.x, goal.y);
                Vec::new()
            }
        };
        self.stats.plans_published.fetch_add(1, Ordering::Relaxed);
        self.publish(TOPIC_PLAN, NavMessage::Path(NavPath { header, poses }));
    }
}

fn encode_publish(topic: &str, msg: Value) -> Arc<str> {
    let env = ProtocolEnvelope::publish(topic, msg).expect("server topics are absolute");
    Arc::from(encode_envelope(&env))
}
