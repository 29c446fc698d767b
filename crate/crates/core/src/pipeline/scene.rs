use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use super::{
    grid_to_points_with, path_to_points, scan_to_points_with, decimate_points, Channel, PointSet, Rgb,
    DEFAULT_OCCUPIED_THRESHOLD, DEFAULT_PATH_STRIDE,
};
use crate::geom::{AnchorRecord, RigidTransform};
use crate::msgs::{self, NavMessage, NavPath, OccupancyGrid, Pose, Time};
use crate::par::Exec;
use crate::queue::Perishable;

/// Source of "now" in seconds for the update loop.
pub trait Clock: Send + Sync {
    fn now(&self) -> f64;
}

#[derive(Debug, Clone)]
pub struct WallClock {
    start: Instant,
}

impl WallClock {
    pub fn new() -> Self {
        Self { start: Instant::now() }
    }

    pub fn seconds_at(&self, at: Instant) -> f64 {
        at.saturating_duration_since(self.start).as_secs_f64()
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for WallClock {
    fn now(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}

/// A clock that only moves when told to, e.g. from simulation `/clock` messages.
#[derive(Debug, Clone, Default)]
pub struct ManualClock(Arc<AtomicU64>);

impl ManualClock {
    pub fn new(t: f64) -> Self {
        Self(Arc::new(AtomicU64::new(t.to_bits())))
    }

    pub fn set(&self, t: f64) {
        self.0.store(t.to_bits(), Ordering::Release);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> f64 {
        f64::from_bits(self.0.load(Ordering::Acquire))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(into = "u8")]
pub enum VisualizationMode {
    None = 1,
    Scan = 2,
    Map = 3,
    ScanMap = 4,
    ScanMapPath = 5,
}

impl From<VisualizationMode> for u8 {
    fn from(m: VisualizationMode) -> u8 {
        m as u8
    }
}

impl VisualizationMode {
    pub const ALL: [VisualizationMode; 5] = [
        VisualizationMode::None,
        VisualizationMode::Scan,
        VisualizationMode::Map,
        VisualizationMode::ScanMap,
        VisualizationMode::ScanMapPath,
    ];

    pub fn from_index(i: u8) -> Option<Self> {
        Self::ALL.get((i as usize).checked_sub(1)?).copied()
    }

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn label(self) -> &'static str {
        match self {
            VisualizationMode::None => "Without any sensor data visualization",
            VisualizationMode::Scan => "With laser scan visualization",
            VisualizationMode::Map => "With environment map visualization",
            VisualizationMode::ScanMap => "With laser scan and environment map visualization",
            VisualizationMode::ScanMapPath => "With laser scan, environment and navigation visualization",
        }
    }

    pub fn enables(self, c: Channel) -> bool {
        use VisualizationMode::*;
        match c {
            Channel::Scan => matches!(self, Scan | ScanMap | ScanMapPath),
            Channel::Map => matches!(self, Map | ScanMap | ScanMapPath),
            Channel::Path => self == ScanMapPath,
        }
    }
}

/// A raw inbound publish, queued by a protocol handler for the update loop.
#[derive(Debug, Clone)]
pub struct InboundMessage {
    pub topic: String,
    pub msg_type: String,
    pub msg: Value,
    /// Clock reading when the frame was dispatched.
    pub received_at: f64,
}

impl Perishable for InboundMessage {
    fn perishability(&self) -> u8 {
        match self.msg_type.as_str() {
            msgs::LASER_SCAN => 2,
            msgs::ODOMETRY | msgs::POSE_WITH_COVARIANCE_STAMPED => 1,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SceneConfig {
    pub occupied_threshold: i8,
    pub path_stride: usize,
    /// Per-channel render budget; `None` keeps every point.
    pub max_points: Option<usize>,
    /// Pose of the laser in the robot base frame.
    pub laser_mount: RigidTransform,
    pub exec: Exec,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            occupied_threshold: DEFAULT_OCCUPIED_THRESHOLD,
            path_stride: DEFAULT_PATH_STRIDE,
            max_points: None,
            laser_mount: RigidTransform::IDENTITY,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameStats {
    pub tick_index: u64,
    /// Clock reading at the start of the tick.
    pub started_at: f64,
    /// Time since the previous tick started (since scene creation for the first); always > 0.
    pub tick_duration: f64,
    /// Clock time spent inside this tick.
    pub processing_cost: f64,
    pub points_processed: usize,
    pub channels_updated: BTreeSet<Channel>,
    pub malformed: usize,
    /// Set when a global plan was applied during this tick.
    pub path_applied_at: Option<f64>,
}

/// Identity of a map revision: a republished grid with the same header and load time is not re-applied.
#[derive(Debug, Clone, PartialEq)]
struct MapKey {
    seq: u32,
    stamp: Time,
    load_time: Time,
    dims: (u32, u32),
}

impl MapKey {
    fn of(g: &OccupancyGrid) -> Self {
        MapKey {
            seq: g.header.seq,
            stamp: g.header.stamp,
            load_time: g.info.map_load_time,
            dims: (g.info.width, g.info.height),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SceneState {
    mode: VisualizationMode,
    scan: PointSet,
    map: PointSet,
    path: PointSet,
    robot_pose: Pose,
    goal: Option<Pose>,
    last_path: Option<NavPath>,
    anchor: AnchorRecord,
    config: SceneConfig,
    latest_grid: Option<OccupancyGrid>,
    applied_map: Option<MapKey>,
    tick_index: u64,
    last_tick_at: f64,
    malformed_total: u64,
}

impl SceneState {
    pub fn new(mode: VisualizationMode, anchor: AnchorRecord, config: SceneConfig, now: f64) -> Self {
        SceneState {
            mode,
            scan: PointSet::empty(Channel::Scan),
            map: PointSet::empty(Channel::Map),
            path: PointSet::empty(Channel::Path),
            robot_pose: Pose::default(),
            goal: None,
            last_path: None,
            anchor,
            config,
            latest_grid: None,
            applied_map: None,
            tick_index: 0,
            last_tick_at: now,
            malformed_total: 0,
        }
    }

    pub fn mode(&self) -> VisualizationMode {
        self.mode
    }

    pub fn channel(&self, c: Channel) -> &PointSet {
        match c {
            Channel::Scan => &self.scan,
            Channel::Map => &self.map,
            Channel::Path => &self.path,
        }
    }

    fn channel_mut(&mut self, c: Channel) -> &mut PointSet {
        match c {
            Channel::Scan => &mut self.scan,
            Channel::Map => &mut self.map,
            Channel::Path => &mut self.path,
        }
    }

    pub fn robot_pose(&self) -> &Pose {
        &self.robot_pose
    }

    pub fn goal(&self) -> Option<&Pose> {
        self.goal.as_ref()
    }

    pub fn set_goal(&mut self, goal: Pose) {
        self.goal = Some(goal);
    }

    pub fn last_path(&self) -> Option<&NavPath> {
        self.last_path.as_ref()
    }

    pub fn anchor(&self) -> &AnchorRecord {
        &self.anchor
    }

    pub fn malformed_total(&self) -> u64 {
        self.malformed_total
    }

    pub fn total_points(&self) -> usize {
        self.scan.len() + self.map.len() + self.path.len()
    }

    /// Re-anchoring invalidates every converted channel; latched data is rebuilt.
    pub fn set_anchor(&mut self, anchor: AnchorRecord) {
        self.anchor = anchor;
        self.replace(Channel::Scan, Vec::new());
        self.applied_map = None;
        self.refresh_map();
        self.refresh_path();
    }

    fn replace(&mut self, c: Channel, points: Vec<crate::geom::Vec3>) {
        let ps = PointSet {
            channel: c,
            points,
            color: c.color(),
            revision: self.channel(c).revision,
        };
        let ps = match self.config.max_points {
            Some(cap) => decimate_points(&ps, cap),
            None => ps,
        };
        let slot = self.channel_mut(c);
        slot.points = ps.points;
        slot.revision += 1;
    }

    /// Switches mode: disabled channels are cleared, newly enabled latched channels are rebuilt.
    pub fn set_mode(&mut self, mode: VisualizationMode) {
        self.mode = mode;
        for c in Channel::ALL {
            if !mode.enables(c) && !self.channel(c).is_empty() {
                self.replace(c, Vec::new());
            }
        }
        if !mode.enables(Channel::Map) {
            self.applied_map = None;
        }
        self.refresh_map();
        if self.path.is_empty() {
            self.refresh_path();
        }
    }

    /// Converts the latest grid unless that revision is already on display. Returns the point count.
    fn refresh_map(&mut self) -> usize {
        if !self.mode.enables(Channel::Map) {
            return 0;
        }
        let Some(grid) = &self.latest_grid else { return 0 };
        let key = MapKey::of(grid);
        if self.applied_map.as_ref() == Some(&key) {
            return 0;
        }
        let ps = grid_to_points_with(self.config.exec, grid, self.config.occupied_threshold, &self.anchor);
        let n = grid.data.len();
        self.replace(Channel::Map, ps.points);
        self.applied_map = Some(key);
        n
    }

    fn refresh_path(&mut self) -> usize {
        if !self.mode.enables(Channel::Path) {
            return 0;
        }
        let Some(path) = &self.last_path else { return 0 };
        let ps = path_to_points(path, self.config.path_stride, &self.anchor);
        let n = path.poses.len();
        self.replace(Channel::Path, ps.points);
        n
    }

    /// Applies one batch of inbound messages and reports what changed.
    ///
    /// Only the newest scan in a batch is converted. Maps are converted once per
    /// revision. Plans are recorded even when the path channel is disabled so
    /// their arrival can still be timed.
    pub fn tick(&mut self, batch: Vec<InboundMessage>, clock: &dyn Clock) -> FrameStats {
        let started_at = clock.now();
        let tick_duration = (started_at - self.last_tick_at).max(f64::MIN_POSITIVE);
        self.last_tick_at = started_at;
        self.tick_index += 1;

        let mut updated = BTreeSet::new();
        let mut points_processed = 0;
        let mut malformed = 0;
        let mut path_applied_at = None;
        let mut newest_scan = None;

        for m in batch {
            let parsed = match msgs::parse_msg(&m.msg_type, &m.msg) {
                Ok(p) => p,
                Err(e) => {
                    log::debug!("skipping {} on {}: {e}", m.msg_type, m.topic);
                    malformed += 1;
                    continue;
                }
            };
            match parsed {
                NavMessage::LaserScan(s) => newest_scan = Some(s),
                NavMessage::OccupancyGrid(g) => {
                    self.latest_grid = Some(g);
                    let n = self.refresh_map();
                    if n > 0 {
                        points_processed += n;
                        updated.insert(Channel::Map);
                    }
                }
                NavMessage::Path(p) => {
                    self.last_path = Some(p);
                    path_applied_at = Some(clock.now());
                    let n = self.refresh_path();
                    if self.mode.enables(Channel::Path) {
                        points_processed += n;
                        updated.insert(Channel::Path);
                    }
                }
                NavMessage::Odometry(o) => self.robot_pose = o.pose.pose,
                NavMessage::Pose(p) => self.robot_pose = *p.pose(),
            }
        }

        if let Some(scan) = newest_scan {
            if self.mode.enables(Channel::Scan) {
                let sensor = self.robot_pose.to_transform().compose(&self.config.laser_mount);
                let ps = scan_to_points_with(self.config.exec, &scan, &sensor, &self.anchor);
                points_processed += scan.ranges.len();
                self.replace(Channel::Scan, ps.points);
                updated.insert(Channel::Scan);
            }
        }

        self.malformed_total += malformed as u64;
        let processing_cost = (clock.now() - started_at).max(0.0);
        FrameStats {
            tick_index: self.tick_index,
            started_at,
            tick_duration,
            processing_cost,
            points_processed,
            channels_updated: updated,
            malformed,
            path_applied_at,
        }
    }

    pub fn snapshot(&self) -> SceneSnapshot {
        SceneSnapshot {
            mode: self.mode,
            channels: Channel::ALL
                .into_iter()
                .map(|c| {
                    let ps = self.channel(c);
                    ChannelSnapshot {
                        channel: c,
                        points: ps.points.iter().flat_map(|p| [p.x, p.y, p.z]).collect(),
                        color: ps.color,
                        revision: ps.revision,
                    }
                })
                .collect(),
            robot_pose: self.robot_pose,
            goal: self.goal,
        }
    }
}

/// Copy of the scene for relays and golden files: per channel a flat `[x, y, z, ...]` array.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneSnapshot {
    pub mode: VisualizationMode,
    pub channels: Vec<ChannelSnapshot>,
    pub robot_pose: Pose,
    pub goal: Option<Pose>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelSnapshot {
    pub channel: Channel,
    pub points: Vec<f64>,
    pub color: Rgb,
    pub revision: u64,
}

impl SceneSnapshot {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("snapshot is plain data")
    }
}
