//! Conversion of navigation messages into render-ready world-frame points, and
//! the scene state that the update loop maintains across visualization modes.

mod scene;

pub use scene::{
    Clock, FrameStats, InboundMessage, ManualClock, SceneConfig, SceneSnapshot, SceneState,
    VisualizationMode, WallClock,
};

use serde::{Deserialize, Serialize};

use crate::geom::{AnchorRecord, RigidTransform, Vec3};
use crate::msgs::{LaserScan, NavPath, OccupancyGrid, Pose};
use crate::par::{self, Exec};

/// Cells at or above this value count as occupied when building the map cloud.
pub const DEFAULT_OCCUPIED_THRESHOLD: i8 = 50;
pub const DEFAULT_PATH_STRIDE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Scan,
    Map,
    Path,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Scan, Channel::Map, Channel::Path];

    pub fn color(self) -> Rgb {
        match self {
            Channel::Scan => Rgb(0, 255, 0),
            Channel::Map => Rgb(255, 0, 255),
            Channel::Path => Rgb(0, 0, 255),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Scan => "scan",
            Channel::Map => "map",
            Channel::Path => "path",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rgb(pub u8, pub u8, pub u8);

#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub channel: Channel,
    pub points: Vec<Vec3>,
    pub color: Rgb,
    pub revision: u64,
}

impl PointSet {
    pub fn empty(channel: Channel) -> Self {
        PointSet {
            channel,
            points: Vec::new(),
            color: channel.color(),
            revision: 0,
        }
    }

    fn with_points(channel: Channel, points: Vec<Vec3>) -> Self {
        PointSet {
            points,
            ..PointSet::empty(channel)
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn scan_to_points(scan: &LaserScan, sensor_pose_in_map: &RigidTransform, anchor: &AnchorRecord) -> PointSet {
    scan_to_points_with(Exec::default(), scan, sensor_pose_in_map, anchor)
}

/// Beams with a finite range inside `[range_min, range_max]` become points in the
/// headset frame; every other beam is dropped.
pub fn scan_to_points_with(
    exec: Exec,
    scan: &LaserScan,
    sensor_pose_in_map: &RigidTransform,
    anchor: &AnchorRecord,
) -> PointSet {
    let to_world = anchor.t_holo_map.compose(sensor_pose_in_map);
    let points = par::filter_map_range(exec, scan.ranges.len(), |i| {
        let r = scan.ranges[i];
        if !(r.is_finite() && r >= scan.range_min && r <= scan.range_max) {
            return None;
        }
        let (s, c) = scan.beam_angle(i).sin_cos();
        let p = to_world.transform_point(Vec3::new(r * c, r * s, 0.0));
        p.is_finite().then_some(p)
    });
    PointSet::with_points(Channel::Scan, points)
}

pub fn grid_to_points(grid: &OccupancyGrid, occupied_threshold: i8, anchor: &AnchorRecord) -> PointSet {
    grid_to_points_with(Exec::default(), grid, occupied_threshold, anchor)
}

/// One point per cell whose value is at least `occupied_threshold` (unknown
/// cells never qualify), placed at the cell center.
pub fn grid_to_points_with(
    exec: Exec,
    grid: &OccupancyGrid,
    occupied_threshold: i8,
    anchor: &AnchorRecord,
) -> PointSet {
    let threshold = occupied_threshold.max(0);
    let to_world = anchor.t_holo_map.compose(&grid.info.origin.to_transform());
    let (w, res) = (grid.width(), grid.resolution());
    let points = par::flat_map_range(exec, grid.height(), |row| {
        let cells = &grid.data[row * w..(row + 1) * w];
        let y = (row as f64 + 0.5) * res;
        cells
            .iter()
            .enumerate()
            .filter(|(_, &v)| v >= threshold)
            .map(|(col, _)| to_world.transform_point(Vec3::new((col as f64 + 0.5) * res, y, 0.0)))
            .collect()
    });
    PointSet::with_points(Channel::Map, points)
}

/// Every `stride`-th pose plus the last one, in order. A zero stride acts as 1.
pub fn downsample_path(path: &NavPath, stride: usize) -> Vec<Pose> {
    let stride = stride.max(1);
    let n = path.poses.len();
    let mut out: Vec<Pose> = path.poses.iter().step_by(stride).map(|p| p.pose).collect();
    if n > 0 && (n - 1) % stride != 0 {
        out.push(path.poses[n - 1].pose);
    }
    out
}

pub fn path_to_points(path: &NavPath, stride: usize, anchor: &AnchorRecord) -> PointSet {
    let points = downsample_path(path, stride)
        .iter()
        .map(|p| anchor.t_holo_map.transform_point(p.position))
        .collect();
    PointSet::with_points(Channel::Path, points)
}

/// Caps a point set at `max_points` by uniform index striding. Deterministic.
pub fn decimate_points(ps: &PointSet, max_points: usize) -> PointSet {
    if ps.points.len() <= max_points {
        return ps.clone();
    }
    let points = if max_points == 0 {
        Vec::new()
    } else {
        let stride = ps.points.len().div_ceil(max_points);
        ps.points.iter().step_by(stride).copied().collect()
    };
    PointSet { points, ..ps.clone() }
}
