//! Navigation-stack message model carried inside bridge envelopes.
//!
//! The JSON layout follows the ROS1 message definitions as rosbridge serializes
//! them (`stamp: {secs, nsecs}`, `info` block on grids, nested `pose.pose` on
//! covariance-carrying messages).

mod map_file;

pub use map_file::{load_map_file, load_map_yaml, save_map_file, MapMetadata};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::geom::{Quat, RigidTransform, Vec3};

pub const LASER_SCAN: &str = "sensor_msgs/LaserScan";
pub const OCCUPANCY_GRID: &str = "nav_msgs/OccupancyGrid";
pub const PATH: &str = "nav_msgs/Path";
pub const ODOMETRY: &str = "nav_msgs/Odometry";
pub const POSE_STAMPED: &str = "geometry_msgs/PoseStamped";
pub const POSE_WITH_COVARIANCE_STAMPED: &str = "geometry_msgs/PoseWithCovarianceStamped";

/// Slack allowed on the last beam angle of a scan.
pub const SCAN_ANGLE_EPS: f64 = 1e-6;
/// Orientation norms further than this from 1 are renormalized on parse.
pub const QUAT_NORM_TOL: f64 = 1e-6;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum MsgError {
    #[error("unsupported message type {0:?}")]
    UnsupportedType(String),
    #[error("schema violation at {0}: {1}")]
    SchemaViolation(String, String),
    #[error("map file missing: {0}")]
    FileMissing(String),
    #[error("bad map yaml field {0}: {1}")]
    BadYamlField(String, String),
    #[error("map image has zero size")]
    ImageSizeZero,
}

fn violation(field: impl Into<String>, reason: impl Into<String>) -> MsgError {
    MsgError::SchemaViolation(field.into(), reason.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Time {
    pub secs: u32,
    pub nsecs: u32,
}

impl Time {
    pub fn from_secs_f64(t: f64) -> Self {
        let t = t.max(0.0);
        let secs = t.floor();
        let mut nsecs = ((t - secs) * 1e9).round() as u32;
        let mut secs = secs as u32;
        if nsecs >= 1_000_000_000 {
            secs += 1;
            nsecs -= 1_000_000_000;
        }
        Time { secs, nsecs }
    }

    pub fn as_secs_f64(self) -> f64 {
        self.secs as f64 + self.nsecs as f64 * 1e-9
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Header {
    #[serde(default)]
    pub seq: u32,
    #[serde(default)]
    pub stamp: Time,
    #[serde(default)]
    pub frame_id: String,
}

impl Header {
    pub fn new(seq: u32, stamp: f64, frame_id: &str) -> Self {
        Header {
            seq,
            stamp: Time::from_secs_f64(stamp),
            frame_id: frame_id.to_string(),
        }
    }

    fn validate(&self, field: &str) -> Result<(), MsgError> {
        if self.stamp.nsecs >= 1_000_000_000 {
            return Err(violation(format!("{field}.stamp.nsecs"), "must be < 1e9"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: Quat,
}

impl Pose {
    pub fn planar(x: f64, y: f64, theta: f64) -> Self {
        Pose {
            position: Vec3::new(x, y, 0.0),
            orientation: Quat::from_yaw(theta),
        }
    }

    pub fn to_transform(&self) -> RigidTransform {
        RigidTransform::new(self.orientation, self.position)
    }

    pub fn from_transform(t: &RigidTransform) -> Self {
        Pose {
            position: t.translation(),
            orientation: t.rotation(),
        }
    }

    pub fn yaw(&self) -> f64 {
        self.orientation.yaw()
    }

    fn validate(&mut self, field: &str) -> Result<(), MsgError> {
        if !self.position.is_finite() {
            return Err(violation(format!("{field}.position"), "non-finite coordinate"));
        }
        let q = self.orientation;
        let n = q.norm();
        if !n.is_finite() || n == 0.0 {
            return Err(violation(format!("{field}.orientation"), "zero or non-finite quaternion"));
        }
        if (n - 1.0).abs() > QUAT_NORM_TOL {
            self.orientation = Quat::new(q.x / n, q.y / n, q.z / n, q.w / n);
        }
        Ok(())
    }
}

/// Range arrays may hold NaN and ±inf. Those go over the wire as the strings
/// `"NaN"`, `"Infinity"`, `"-Infinity"`; `null` reads back as NaN.
mod lenient_f64_vec {
    use super::*;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
        Null,
    }

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for x in v {
            if x.is_finite() {
                seq.serialize_element(x)?;
            } else if x.is_nan() {
                seq.serialize_element("NaN")?;
            } else if *x > 0.0 {
                seq.serialize_element("Infinity")?;
            } else {
                seq.serialize_element("-Infinity")?;
            }
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raw: Vec<Raw> = Vec::deserialize(d)?;
        raw.into_iter()
            .map(|r| match r {
                Raw::Num(x) => Ok(x),
                Raw::Null => Ok(f64::NAN),
                Raw::Text(t) => match t.as_str() {
                    "NaN" | "nan" => Ok(f64::NAN),
                    "Infinity" | "inf" => Ok(f64::INFINITY),
                    "-Infinity" | "-inf" => Ok(f64::NEG_INFINITY),
                    other => Err(serde::de::Error::custom(format!("not a number: {other:?}"))),
                },
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LaserScan {
    pub header: Header,
    pub angle_min: f64,
    pub angle_max: f64,
    pub angle_increment: f64,
    #[serde(default)]
    pub time_increment: f64,
    #[serde(default)]
    pub scan_time: f64,
    pub range_min: f64,
    pub range_max: f64,
    #[serde(with = "lenient_f64_vec")]
    pub ranges: Vec<f64>,
    #[serde(default, with = "lenient_f64_vec")]
    pub intensities: Vec<f64>,
}

/// Bitwise comparison on the range arrays so NaN readings compare equal to themselves.
impl PartialEq for LaserScan {
    fn eq(&self, o: &Self) -> bool {
        fn bits(v: &[f64]) -> impl Iterator<Item = u64> + '_ {
            v.iter().map(|x| x.to_bits())
        }
        self.header == o.header
            && self.angle_min == o.angle_min
            && self.angle_max == o.angle_max
            && self.angle_increment == o.angle_increment
            && self.time_increment == o.time_increment
            && self.scan_time == o.scan_time
            && self.range_min == o.range_min
            && self.range_max == o.range_max
            && self.ranges.len() == o.ranges.len()
            && bits(&self.ranges).eq(bits(&o.ranges))
            && self.intensities.len() == o.intensities.len()
            && bits(&self.intensities).eq(bits(&o.intensities))
    }
}

impl LaserScan {
    pub fn validate(&self) -> Result<(), MsgError> {
        self.header.validate("header")?;
        if !(self.angle_increment > 0.0) {
            return Err(violation("angle_increment", "must be > 0"));
        }
        if !self.angle_min.is_finite() || !self.angle_max.is_finite() {
            return Err(violation("angle_min", "non-finite angle bounds"));
        }
        if let Some(last) = self.ranges.len().checked_sub(1) {
            let last_angle = self.angle_min + last as f64 * self.angle_increment;
            if last_angle > self.angle_max + SCAN_ANGLE_EPS {
                return Err(violation("ranges", "beam angles exceed angle_max"));
            }
        }
        if !(self.range_min >= 0.0 && self.range_min < self.range_max) {
            return Err(violation("range_min", "require 0 <= range_min < range_max"));
        }
        Ok(())
    }

    pub fn beam_angle(&self, i: usize) -> f64 {
        self.angle_min + i as f64 * self.angle_increment
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MapMetaData {
    #[serde(default)]
    pub map_load_time: Time,
    pub resolution: f64,
    pub width: u32,
    pub height: u32,
    pub origin: Pose,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OccupancyGrid {
    pub header: Header,
    pub info: MapMetaData,
    pub data: Vec<i8>,
}

impl OccupancyGrid {
    pub const UNKNOWN: i8 = -1;
    pub const FREE: i8 = 0;
    pub const OCCUPIED: i8 = 100;

    /// Grid filled with `value`, origin at the map-frame origin.
    pub fn filled(width: u32, height: u32, resolution: f64, value: i8) -> Self {
        OccupancyGrid {
            header: Header::new(0, 0.0, "map"),
            info: MapMetaData {
                map_load_time: Time::default(),
                resolution,
                width,
                height,
                origin: Pose::default(),
            },
            data: vec![value; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> usize {
        self.info.width as usize
    }

    pub fn height(&self) -> usize {
        self.info.height as usize
    }

    pub fn resolution(&self) -> f64 {
        self.info.resolution
    }

    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width() + col
    }

    pub fn get(&self, col: usize, row: usize) -> i8 {
        self.data[self.index(col, row)]
    }

    pub fn set(&mut self, col: usize, row: usize, value: i8) {
        let i = self.index(col, row);
        self.data[i] = value;
    }

    /// World extent `(width_m, height_m)`.
    pub fn extent(&self) -> (f64, f64) {
        (
            self.info.width as f64 * self.info.resolution,
            self.info.height as f64 * self.info.resolution,
        )
    }

    pub fn validate(&self) -> Result<(), MsgError> {
        self.header.validate("header")?;
        if !(self.info.resolution > 0.0 && self.info.resolution.is_finite()) {
            return Err(violation("info.resolution", "must be positive and finite"));
        }
        let expected = self.info.width as usize * self.info.height as usize;
        if self.data.len() != expected {
            return Err(violation("data", "length mismatch"));
        }
        if let Some(bad) = self.data.iter().find(|&&v| v < -1 || v > 100) {
            return Err(violation("data", format!("cell value {bad} outside {{-1}} and [0,100]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PoseStamped {
    pub header: Header,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NavPath {
    pub header: Header,
    pub poses: Vec<PoseStamped>,
}

impl NavPath {
    pub fn validate(&mut self) -> Result<(), MsgError> {
        self.header.validate("header")?;
        let frame = self.header.frame_id.clone();
        for (i, p) in self.poses.iter_mut().enumerate() {
            p.header.validate(&format!("poses[{i}].header"))?;
            if p.header.frame_id != frame {
                return Err(violation(format!("poses[{i}].header.frame_id"), "differs from path frame_id"));
            }
            p.pose.validate(&format!("poses[{i}].pose"))?;
        }
        Ok(())
    }
}

fn covariance_default() -> Vec<f64> {
    vec![0.0; 36]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseWithCovariance {
    pub pose: Pose,
    #[serde(default = "covariance_default")]
    pub covariance: Vec<f64>,
}

impl Default for PoseWithCovariance {
    fn default() -> Self {
        PoseWithCovariance {
            pose: Pose::default(),
            covariance: covariance_default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist {
    pub linear: Vec3,
    pub angular: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwistWithCovariance {
    pub twist: Twist,
    #[serde(default = "covariance_default")]
    pub covariance: Vec<f64>,
}

impl Default for TwistWithCovariance {
    fn default() -> Self {
        TwistWithCovariance {
            twist: Twist::default(),
            covariance: covariance_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Odometry {
    pub header: Header,
    #[serde(default)]
    pub child_frame_id: String,
    pub pose: PoseWithCovariance,
    pub twist: TwistWithCovariance,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PoseWithCovarianceStamped {
    pub header: Header,
    pub pose: PoseWithCovariance,
}

fn check_covariance(field: &str, c: &[f64]) -> Result<(), MsgError> {
    if c.len() != 36 {
        return Err(violation(field, format!("covariance length {} != 36", c.len())));
    }
    Ok(())
}

/// A parsed, validated message of one of the supported kinds.
#[derive(Debug, Clone, PartialEq)]
pub enum NavMessage {
    LaserScan(LaserScan),
    OccupancyGrid(OccupancyGrid),
    Path(NavPath),
    Odometry(Odometry),
    /// Goals (`PoseStamped`) and localization estimates (`PoseWithCovarianceStamped`).
    Pose(PoseMessage),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PoseMessage {
    Stamped(PoseStamped),
    WithCovariance(PoseWithCovarianceStamped),
}

impl PoseMessage {
    pub fn header(&self) -> &Header {
        match self {
            PoseMessage::Stamped(p) => &p.header,
            PoseMessage::WithCovariance(p) => &p.header,
        }
    }

    pub fn pose(&self) -> &Pose {
        match self {
            PoseMessage::Stamped(p) => &p.pose,
            PoseMessage::WithCovariance(p) => &p.pose.pose,
        }
    }
}

impl NavMessage {
    pub fn msg_type(&self) -> &'static str {
        match self {
            NavMessage::LaserScan(_) => LASER_SCAN,
            NavMessage::OccupancyGrid(_) => OCCUPANCY_GRID,
            NavMessage::Path(_) => PATH,
            NavMessage::Odometry(_) => ODOMETRY,
            NavMessage::Pose(PoseMessage::Stamped(_)) => POSE_STAMPED,
            NavMessage::Pose(PoseMessage::WithCovariance(_)) => POSE_WITH_COVARIANCE_STAMPED,
        }
    }

    pub fn to_json(&self) -> Value {
        let v = match self {
            NavMessage::LaserScan(m) => serde_json::to_value(m),
            NavMessage::OccupancyGrid(m) => serde_json::to_value(m),
            NavMessage::Path(m) => serde_json::to_value(m),
            NavMessage::Odometry(m) => serde_json::to_value(m),
            NavMessage::Pose(PoseMessage::Stamped(m)) => serde_json::to_value(m),
            NavMessage::Pose(PoseMessage::WithCovariance(m)) => serde_json::to_value(m),
        };
        // All fields are plain data and non-finite floats in ranges are written as strings.
        v.expect("message serialization is infallible")
    }
}

pub fn is_supported(msg_type: &str) -> bool {
    matches!(
        msg_type,
        LASER_SCAN | OCCUPANCY_GRID | PATH | ODOMETRY | POSE_STAMPED | POSE_WITH_COVARIANCE_STAMPED
    )
}

fn from_value<T: DeserializeOwned>(msg: &Value) -> Result<T, MsgError> {
    serde_path_to_error::deserialize(msg).map_err(|e| {
        let path = e.path().to_string();
        violation(if path.is_empty() { ".".into() } else { path }, e.inner().to_string())
    })
}

/// Parses and validates a message body of the given ROS type.
pub fn parse_msg(msg_type: &str, msg: &Value) -> Result<NavMessage, MsgError> {
    match msg_type {
        LASER_SCAN => {
            let m: LaserScan = from_value(msg)?;
            m.validate()?;
            Ok(NavMessage::LaserScan(m))
        }
        OCCUPANCY_GRID => {
            let mut m: OccupancyGrid = from_value(msg)?;
            m.validate()?;
            m.info.origin.validate("info.origin")?;
            Ok(NavMessage::OccupancyGrid(m))
        }
        PATH => {
            let mut m: NavPath = from_value(msg)?;
            m.validate()?;
            Ok(NavMessage::Path(m))
        }
        ODOMETRY => {
            let mut m: Odometry = from_value(msg)?;
            m.header.validate("header")?;
            m.pose.pose.validate("pose.pose")?;
            check_covariance("pose.covariance", &m.pose.covariance)?;
            check_covariance("twist.covariance", &m.twist.covariance)?;
            Ok(NavMessage::Odometry(m))
        }
        POSE_STAMPED => {
            let mut m: PoseStamped = from_value(msg)?;
            m.header.validate("header")?;
            m.pose.validate("pose")?;
            Ok(NavMessage::Pose(PoseMessage::Stamped(m)))
        }
        POSE_WITH_COVARIANCE_STAMPED => {
            let mut m: PoseWithCovarianceStamped = from_value(msg)?;
            m.header.validate("header")?;
            m.pose.pose.validate("pose.pose")?;
            check_covariance("pose.covariance", &m.pose.covariance)?;
            Ok(NavMessage::Pose(PoseMessage::WithCovariance(m)))
        }
        other => Err(MsgError::UnsupportedType(other.to_string())),
    }
}
