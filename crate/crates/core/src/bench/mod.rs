//! Five-mode visualization experiment against a running simulator.
//!
//! A trial connects, anchors the scene at the robot's current pose, streams the
//! channels its mode enables, sends a navigation goal halfway through and times
//! how long the plan takes to reach the scene.
//!
//! If the simulator runs in fixed-step mode the harness drives it: every frame
//! requests one step and ticks the scene when the resulting `/clock` arrives.
//! All timings are then simulation time and a run is exactly reproducible.

mod report;
mod stats;

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tokio::sync::watch;

use crate::geom::{align_anchor, observe_marker, robo_map_from_localization, MarkerObservation, RigidTransform};
use crate::msgs::{self, Header, OccupancyGrid, Pose, PoseStamped, PoseWithCovariance, PoseWithCovarianceStamped, Time};
use crate::pipeline::{Clock, InboundMessage, ManualClock, SceneConfig, SceneState, VisualizationMode, WallClock};
use crate::pipeline::Channel;
use crate::proto::{ClientSession, ProtoError, SessionConfig, WireRecord};
use crate::queue::DropQueue;
use crate::sim::planner::InflatedGrid;
use crate::sim::raycast::{cell_center, cell_of};
use crate::sim::server::{CLOCK_TYPE, STEP_TYPE, TOPIC_AMCL, TOPIC_CLOCK, TOPIC_GOAL, TOPIC_INITIAL_POSE, TOPIC_MAP, TOPIC_PLAN, TOPIC_SCAN, TOPIC_SIM_STEP};
use crate::sim::PlanarPose;

pub use report::{render_report, ModeSummary, Report, ReportFormat, TrialFailure};
pub use stats::{quantile_sorted, Aggregate};

pub const DEFAULT_TRIALS: usize = 20;
/// Give up on a goal if no plan arrives within this many seconds.
pub const PLAN_TIMEOUT: f64 = 30.0;
/// Tick floor when no data arrives (wall-clock mode).
pub const FRAME_RATE: f64 = 60.0;
const INBOUND_CAPACITY: usize = 256;
const LOCALIZATION_TIMEOUT: Duration = Duration::from_secs(5);
const STEP_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("simulator unreachable: {0}")]
    SimUnreachable(String),
    #[error("no plan within {0} s of the goal")]
    TrialTimeout(f64),
    #[error("no localization from the simulator")]
    NoLocalization,
    #[error("bad experiment configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Proto(#[from] ProtoError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub mode: u8,
    pub label: String,
    /// Trial length in seconds.
    pub duration: f64,
    /// Navigation goal sent at the trial midpoint; `None` skips the latency measurement.
    pub goal: Option<PlanarPose>,
}

impl ModeSpec {
    pub fn new(mode: VisualizationMode, duration: f64, goal: Option<PlanarPose>) -> Self {
        ModeSpec {
            mode: mode.index(),
            label: mode.label().to_string(),
            duration,
            goal,
        }
    }

    pub fn visualization_mode(&self) -> Result<VisualizationMode, BenchError> {
        VisualizationMode::from_index(self.mode).ok_or_else(|| BenchError::BadConfig(format!("mode {} is not in 1..=5", self.mode)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub mode: u8,
    pub position: usize,
    pub trial: usize,
    /// Scene ticks per second.
    pub update_rate: f64,
    pub mean_tick_cost: f64,
    pub p95_tick_cost: f64,
    /// Goal publish to the plan being applied to the scene.
    pub time_to_execution: Option<f64>,
    pub points_peak: usize,
    pub ticks: u64,
    pub dropped_inbound: u64,
}

#[derive(Debug, Clone)]
pub struct Endpoints {
    pub url: String,
    pub connect_timeout: Duration,
    /// Keep the session's wire log for [`run_trial_detailed`].
    pub record_wire: bool,
}

impl Endpoints {
    pub fn new(url: impl Into<String>) -> Self {
        Endpoints {
            url: url.into(),
            connect_timeout: Duration::from_secs(5),
            record_wire: false,
        }
    }
}

/// How the trial's clock was driven.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Timing {
    Wall,
    Lockstep,
}

#[derive(Debug, Clone)]
pub struct TrialRun {
    pub result: TrialResult,
    pub timing: Timing,
    /// Session wire log; empty unless `record_wire` was set.
    pub wire: Vec<WireRecord>,
    /// Points on each channel when the trial ended.
    pub final_points: [usize; 3],
}

pub async fn run_trial(spec: &ModeSpec, endpoints: &Endpoints) -> Result<TrialResult, BenchError> {
    Ok(run_trial_detailed(spec, endpoints, None).await?.result)
}

fn goal_msg(p: PlanarPose, frame: &str, stamp: f64) -> PoseStamped {
    PoseStamped {
        header: Header::new(0, stamp, frame),
        pose: Pose::planar(p.x, p.y, p.theta),
    }
}

fn initial_pose_msg(p: PlanarPose) -> Value {
    let msg = PoseWithCovarianceStamped {
        header: Header::new(0, 0.0, "map"),
        pose: PoseWithCovariance {
            pose: Pose::planar(p.x, p.y, p.theta),
            ..Default::default()
        },
    };
    serde_json::to_value(msg).expect("plain message")
}

struct Trial {
    session: ClientSession,
    queue: Arc<DropQueue<InboundMessage>>,
    sim_clock: ManualClock,
    clock_rx: watch::Receiver<u64>,
    lockstep: Arc<AtomicBool>,
}

impl Trial {
    fn bind(&self, topic: &str, msg_type: &str, wall: &WallClock) -> Result<(), BenchError> {
        let (queue, wall, t, ty) = (self.queue.clone(), wall.clone(), topic.to_string(), msg_type.to_string());
        self.session.subscribe(topic, msg_type, move |env| {
            queue.push(InboundMessage {
                topic: t.clone(),
                msg_type: ty.clone(),
                msg: env.into_msg().unwrap_or(Value::Null),
                received_at: wall.now(),
            });
        })?;
        Ok(())
    }
}

/// Runs one trial, optionally teleporting the robot to `start` first.
pub async fn run_trial_detailed(
    spec: &ModeSpec,
    endpoints: &Endpoints,
    start: Option<PlanarPose>,
) -> Result<TrialRun, BenchError> {
    let mode = spec.visualization_mode()?;
    if !(spec.duration > 0.0) {
        return Err(BenchError::BadConfig("duration must be > 0".into()));
    }
    let session = ClientSession::connect(
        &endpoints.url,
        SessionConfig {
            connect_timeout: endpoints.connect_timeout,
            record_wire: endpoints.record_wire,
        },
    )
    .await
    .map_err(|e| BenchError::SimUnreachable(e.to_string()))?;

    let wall = WallClock::new();
    let (clock_tx, clock_rx) = watch::channel(0u64);
    let trial = Trial {
        session,
        queue: Arc::new(DropQueue::new(INBOUND_CAPACITY)),
        sim_clock: ManualClock::new(0.0),
        clock_rx,
        lockstep: Arc::new(AtomicBool::new(false)),
    };

    if let Some(p) = start {
        trial
            .session
            .advertise_and_publish(TOPIC_INITIAL_POSE, msgs::POSE_WITH_COVARIANCE_STAMPED, initial_pose_msg(p))?;
    }

    // A fixed-step simulator answers a /clock subscription at once, ahead of the latched pose.
    {
        let (clock, lockstep) = (trial.sim_clock.clone(), trial.lockstep.clone());
        let mut n = 0u64;
        trial.session.subscribe(TOPIC_CLOCK, CLOCK_TYPE, move |env| {
            let t = env
                .msg()
                .and_then(|m| m.get("clock"))
                .and_then(|c| serde_json::from_value::<Time>(c.clone()).ok());
            if let Some(t) = t {
                clock.set(t.as_secs_f64());
                lockstep.store(true, Ordering::Release);
                n += 1;
                clock_tx.send_replace(n);
            }
        })?;
    }
    trial.bind(TOPIC_AMCL, msgs::POSE_WITH_COVARIANCE_STAMPED, &wall)?;

    let robot = wait_for_localization(&trial).await?;
    let timing = if trial.lockstep.load(Ordering::Acquire) { Timing::Lockstep } else { Timing::Wall };
    let clock: Arc<dyn Clock> = match timing {
        Timing::Lockstep => Arc::new(trial.sim_clock.clone()),
        Timing::Wall => Arc::new(wall.clone()),
    };

    let marker = MarkerObservation {
        marker_in_camera: RigidTransform::IDENTITY,
        marker_in_robot: RigidTransform::IDENTITY,
    };
    let anchor = align_anchor(
        &observe_marker(&marker),
        &robo_map_from_localization(robot.position.x, robot.position.y, robot.yaw()),
    );
    let mut scene = SceneState::new(mode, anchor, SceneConfig::default(), clock.now());

    if mode.enables(Channel::Scan) {
        trial.bind(TOPIC_SCAN, msgs::LASER_SCAN, &wall)?;
    }
    if mode.enables(Channel::Map) {
        trial.bind(TOPIC_MAP, msgs::OCCUPANCY_GRID, &wall)?;
    }
    if spec.goal.is_some() || mode.enables(Channel::Path) {
        trial.bind(TOPIC_PLAN, msgs::PATH, &wall)?;
    }

    let t0 = clock.now();
    let mut costs = Vec::new();
    let mut points_peak = 0;
    let mut ticks = 0u64;
    let mut goal_sent_at: Option<f64> = None;
    let mut tte = None;
    let mut clock_rx = trial.clock_rx.clone();
    let frame = Duration::from_secs_f64(1.0 / FRAME_RATE);

    loop {
        let now = clock.now();
        if let (Some(goal), None) = (spec.goal, goal_sent_at) {
            if now - t0 >= 0.5 * spec.duration {
                let msg = serde_json::to_value(goal_msg(goal, "map", now)).expect("plain message");
                goal_sent_at = Some(clock.now());
                trial.session.advertise_and_publish(TOPIC_GOAL, msgs::POSE_STAMPED, msg)?;
            }
        }
        let waiting_for_plan = goal_sent_at.is_some() && tte.is_none();
        if now - t0 >= spec.duration && !waiting_for_plan {
            break;
        }
        if let (Some(sent), true) = (goal_sent_at, waiting_for_plan) {
            if now - sent > PLAN_TIMEOUT {
                return Err(BenchError::TrialTimeout(PLAN_TIMEOUT));
            }
        }

        match timing {
            Timing::Lockstep => {
                clock_rx.borrow_and_update();
                trial.session.advertise_and_publish(TOPIC_SIM_STEP, STEP_TYPE, json!({ "data": 1 }))?;
                tokio::select! {
                    r = tokio::time::timeout(STEP_TIMEOUT, clock_rx.changed()) => match r {
                        Ok(Ok(())) => {}
                        Ok(Err(_)) => return Err(BenchError::SimUnreachable("session closed".into())),
                        Err(_) => return Err(BenchError::SimUnreachable("simulator stopped stepping".into())),
                    },
                    _ = trial.session.closed() => return Err(BenchError::SimUnreachable("session closed".into())),
                }
            }
            Timing::Wall => {
                tokio::select! {
                    _ = trial.queue.ready() => {}
                    _ = tokio::time::sleep(frame) => {}
                    _ = trial.session.closed() => return Err(BenchError::SimUnreachable("session closed".into())),
                }
            }
        }

        let stats = scene.tick(trial.queue.drain(), clock.as_ref());
        ticks += 1;
        costs.push(stats.processing_cost);
        points_peak = points_peak.max(scene.total_points());
        if let (Some(sent), Some(at), None) = (goal_sent_at, stats.path_applied_at, tte) {
            tte = Some(at - sent);
        }
    }

    let elapsed = (clock.now() - t0).max(f64::MIN_POSITIVE);
    costs.sort_by(f64::total_cmp);
    let result = TrialResult {
        mode: spec.mode,
        position: 0,
        trial: 0,
        update_rate: ticks.max(1) as f64 / elapsed,
        mean_tick_cost: if costs.is_empty() { 0.0 } else { costs.iter().sum::<f64>() / costs.len() as f64 },
        p95_tick_cost: if costs.is_empty() { 0.0 } else { quantile_sorted(&costs, 0.95) },
        time_to_execution: tte,
        points_peak,
        ticks,
        dropped_inbound: trial.queue.dropped(),
    };
    let final_points = Channel::ALL.map(|c| scene.channel(c).len());
    let wire = trial.session.wire_log();
    trial.session.close();
    Ok(TrialRun {
        result,
        timing,
        wire,
        final_points,
    })
}

async fn wait_for_localization(trial: &Trial) -> Result<Pose, BenchError> {
    let deadline = tokio::time::Instant::now() + LOCALIZATION_TIMEOUT;
    let mut held = VecDeque::new();
    let found = loop {
        tokio::select! {
            _ = trial.queue.ready() => {}
            _ = tokio::time::sleep_until(deadline) => break None,
            _ = trial.session.closed() => return Err(BenchError::SimUnreachable("session closed".into())),
        }
        let mut hit = None;
        for m in trial.queue.drain() {
            if hit.is_none() && m.topic == TOPIC_AMCL {
                if let Ok(msgs::NavMessage::Pose(p)) = msgs::parse_msg(&m.msg_type, &m.msg) {
                    hit = Some(*p.pose());
                }
            }
            held.push_back(m);
        }
        if hit.is_some() {
            break hit;
        }
    };
    for m in held {
        trial.queue.push(m);
    }
    found.ok_or(BenchError::NoLocalization)
}

/// Latched map and current robot pose, for picking goals and positions.
pub async fn fetch_world(endpoints: &Endpoints) -> Result<(OccupancyGrid, PlanarPose), BenchError> {
    let session = ClientSession::connect(
        &endpoints.url,
        SessionConfig {
            connect_timeout: endpoints.connect_timeout,
            record_wire: false,
        },
    )
    .await
    .map_err(|e| BenchError::SimUnreachable(e.to_string()))?;
    let (tx, mut rx) = tokio::sync::mpsc::unbounded_channel();
    let tx2 = tx.clone();
    session.subscribe(TOPIC_MAP, msgs::OCCUPANCY_GRID, move |env| {
        let _ = tx.send((TOPIC_MAP, env.into_msg()));
    })?;
    session.subscribe(TOPIC_AMCL, msgs::POSE_WITH_COVARIANCE_STAMPED, move |env| {
        let _ = tx2.send((TOPIC_AMCL, env.into_msg()));
    })?;
    let (mut grid, mut pose) = (None, None);
    let wait = async {
        while grid.is_none() || pose.is_none() {
            let Some((topic, msg)) = rx.recv().await else { break };
            let msg = msg.unwrap_or(Value::Null);
            match topic {
                TOPIC_MAP => {
                    if let Ok(msgs::NavMessage::OccupancyGrid(g)) = msgs::parse_msg(msgs::OCCUPANCY_GRID, &msg) {
                        grid = Some(g);
                    }
                }
                _ => {
                    if let Ok(msgs::NavMessage::Pose(p)) = msgs::parse_msg(msgs::POSE_WITH_COVARIANCE_STAMPED, &msg) {
                        let p = p.pose();
                        pose = Some(PlanarPose::new(p.position.x, p.position.y, p.yaw()));
                    }
                }
            }
        }
    };
    let _ = tokio::time::timeout(LOCALIZATION_TIMEOUT, wait).await;
    session.close();
    match (grid, pose) {
        (Some(g), Some(p)) => Ok((g, p)),
        (None, _) => Err(BenchError::SimUnreachable("no map received".into())),
        (_, None) => Err(BenchError::NoLocalization),
    }
}

/// The free cell farthest (in 8-connected steps) from `start` that keeps
/// `clearance` metres from obstacles and unknown space.
pub fn choose_goal(grid: &OccupancyGrid, start: PlanarPose, clearance: f64) -> Option<PlanarPose> {
    let inflated = InflatedGrid::new(grid, clearance);
    let (c0, r0) = cell_of(grid, start.x, start.y)?;
    if inflated.is_blocked(c0, r0) {
        return None;
    }
    let w = grid.width();
    let mut seen = vec![false; grid.data.len()];
    let mut frontier = VecDeque::from([(c0, r0)]);
    seen[r0 * w + c0] = true;
    let mut last = (c0, r0);
    while let Some((c, r)) = frontier.pop_front() {
        last = (c, r);
        for (nc, nr, _) in inflated.neighbors(c, r) {
            if !seen[nr * w + nc] {
                seen[nr * w + nc] = true;
                frontier.push_back((nc, nr));
            }
        }
    }
    if last == (c0, r0) {
        return None;
    }
    let (x, y) = cell_center(grid, last.0, last.1);
    Some(PlanarPose::new(x, y, 0.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub modes: Vec<ModeSpec>,
    pub trials: usize,
    pub positions: Vec<PlanarPose>,
}

impl ExperimentConfig {
    /// SHA-256 of the configuration, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("plain config");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Runs the trials × modes × positions grid, one trial at a time.
///
/// Each trial starts with the robot teleported to its position. An empty
/// `positions` runs every trial wherever the robot happens to be. Failed trials
/// are listed in the report, which is then marked partial.
pub async fn run_experiment(config: &ExperimentConfig, endpoints: &Endpoints) -> Report {
    let mut trials = Vec::new();
    let mut failures = Vec::new();
    let mut timing = None;
    let positions: Vec<Option<PlanarPose>> = if config.positions.is_empty() {
        vec![None]
    } else {
        config.positions.iter().copied().map(Some).collect()
    };
    for (pi, start) in positions.iter().enumerate() {
        for trial in 0..config.trials {
            for spec in &config.modes {
                match run_trial_detailed(spec, endpoints, *start).await {
                    Ok(run) => {
                        timing.get_or_insert(run.timing);
                        let mut r = run.result;
                        r.position = pi;
                        r.trial = trial;
                        log::info!(
                            "mode {} position {pi} trial {trial}: {:.1} Hz, tte {:?}",
                            r.mode,
                            r.update_rate,
                            r.time_to_execution
                        );
                        trials.push(r);
                    }
                    Err(e) => {
                        log::error!("mode {} position {pi} trial {trial} failed: {e}", spec.mode);
                        failures.push(TrialFailure {
                            mode: spec.mode,
                            position: pi,
                            trial,
                            error: e.to_string(),
                        });
                    }
                }
            }
        }
    }
    Report::build(config, positions.len(), trials, failures, timing)
}
