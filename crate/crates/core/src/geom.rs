//! Rigid-body transforms and the two-stage headset/robot/map alignment.
//!
//! A [`RigidTransform`] named `T_a_b` maps a point expressed in frame `b` into
//! frame `a`: `p_a = R * p_b + t`. With that convention the alignment chain reads
//! `T_holo_map = T_holo_robo * T_robo_map`.

use std::path::Path;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl std::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl std::ops::Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Quaternion in (x, y, z, w) order, matching `geometry_msgs/Quaternion`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
}

impl Default for Quat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat { x: 0.0, y: 0.0, z: 0.0, w: 1.0 };

    pub const fn new(x: f64, y: f64, z: f64, w: f64) -> Self {
        Self { x, y, z, w }
    }

    pub fn from_yaw(theta: f64) -> Self {
        let (s, c) = (0.5 * theta).sin_cos();
        Quat::new(0.0, 0.0, s, c)
    }

    /// Rotation of `angle` rad about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Quat::IDENTITY;
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let a = axis * (s / n);
        Quat::new(a.x, a.y, a.z, c)
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z + self.w * self.w).sqrt()
    }

    /// Unit quaternion with non-negative `w`. A zero or non-finite input collapses to identity.
    pub fn normalized(self) -> Self {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Quat::IDENTITY;
        }
        let s = if self.w < 0.0 { -1.0 / n } else { 1.0 / n };
        Quat::new(self.x * s, self.y * s, self.z * s, self.w * s)
    }

    pub fn conjugate(self) -> Self {
        Quat::new(-self.x, -self.y, -self.z, self.w)
    }

    /// Hamilton product `self * o`.
    pub fn mul(self, o: Quat) -> Quat {
        Quat::new(
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
        )
    }

    /// Rotates `v`; assumes a unit quaternion.
    pub fn rotate(self, v: Vec3) -> Vec3 {
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    /// Heading about +z of a unit quaternion.
    pub fn yaw(self) -> f64 {
        let siny = 2.0 * (self.w * self.z + self.x * self.y);
        let cosy = 1.0 - 2.0 * (self.y * self.y + self.z * self.z);
        siny.atan2(cosy)
    }
}

/// `T_a_b`: maps coordinates expressed in frame `b` into frame `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    rotation: Quat,
    translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        rotation: Quat::IDENTITY,
        translation: Vec3::ZERO,
    };

    /// The rotation is renormalized, so callers may pass any non-zero quaternion.
    pub fn new(rotation: Quat, translation: Vec3) -> Self {
        Self {
            rotation: rotation.normalized(),
            translation,
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self::new(Quat::IDENTITY, t)
    }

    /// Planar pose: translation `(x, y, 0)` and yaw `theta` about +z.
    pub fn from_planar(x: f64, y: f64, theta: f64) -> Self {
        Self::new(Quat::from_yaw(theta), Vec3::new(x, y, 0.0))
    }

    pub fn rotation(&self) -> Quat {
        self.rotation
    }

    pub fn translation(&self) -> Vec3 {
        self.translation
    }

    pub fn is_finite(&self) -> bool {
        let q = self.rotation;
        self.translation.is_finite()
            && q.x.is_finite()
            && q.y.is_finite()
            && q.z.is_finite()
            && q.w.is_finite()
    }

    /// `T_a_b.compose(T_b_c) == T_a_c`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform::new(
            self.rotation.mul(other.rotation),
            self.rotation.rotate(other.translation) + self.translation,
        )
    }

    pub fn invert(&self) -> RigidTransform {
        let inv = self.rotation.conjugate();
        RigidTransform::new(inv, -inv.rotate(self.translation))
    }

    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    /// Planar projection `(x, y, yaw)`.
    pub fn to_planar(&self) -> (f64, f64, f64) {
        (self.translation.x, self.translation.y, self.rotation.yaw())
    }
}

/// Free-function forms, mirroring the operation names used across the crate.
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

pub fn invert(t: &RigidTransform) -> RigidTransform {
    t.invert()
}

pub fn transform_point(t: &RigidTransform, p: Vec3) -> Vec3 {
    t.transform_point(p)
}

pub fn from_planar(x: f64, y: f64, theta: f64) -> RigidTransform {
    RigidTransform::from_planar(x, y, theta)
}

/// A detected fiducial: its pose in the headset camera frame and its known mounting pose on the robot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkerObservation {
    pub marker_in_camera: RigidTransform,
    pub marker_in_robot: RigidTransform,
}

/// Headset-from-robot transform implied by a marker sighting.
pub fn observe_marker(obs: &MarkerObservation) -> RigidTransform {
    obs.marker_in_camera.compose(&obs.marker_in_robot.invert())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorRecord {
    pub anchor_id: String,
    pub t_holo_map: RigidTransform,
    /// Seconds since the Unix epoch.
    pub created_at: f64,
}

/// Builds the map anchor from a marker-derived `T_holo_robo` and the robot's
/// `T_robo_map` (the inverse of the localized pose of the robot in the map).
pub fn align_anchor(t_holo_robo: &RigidTransform, t_robo_map: &RigidTransform) -> AnchorRecord {
    let created_at = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    AnchorRecord {
        anchor_id: format!("anchor-{:.6}", created_at),
        t_holo_map: t_holo_robo.compose(t_robo_map),
        created_at,
    }
}

/// `T_robo_map` from a planar localization estimate of the robot in the map frame.
pub fn robo_map_from_localization(x: f64, y: f64, theta: f64) -> RigidTransform {
    RigidTransform::from_planar(x, y, theta).invert()
}

pub fn map_to_world(anchor: &AnchorRecord, p_map: Vec3) -> Vec3 {
    anchor.t_holo_map.transform_point(p_map)
}

impl AnchorRecord {
    pub fn identity() -> Self {
        AnchorRecord {
            anchor_id: "identity".into(),
            t_holo_map: RigidTransform::IDENTITY,
            created_at: 0.0,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        let file = AnchorFile {
            anchor_id: self.anchor_id.clone(),
            quaternion: self.t_holo_map.rotation(),
            translation: self.t_holo_map.translation(),
            timestamp: self.created_at,
        };
        let text = serde_json::to_string_pretty(&file)?;
        std::fs::write(path, text).map_err(|e| Error::Io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Io(path.display().to_string(), e))?;
        let file: AnchorFile = serde_json::from_str(&text)?;
        Ok(AnchorRecord {
            anchor_id: file.anchor_id,
            t_holo_map: RigidTransform::new(file.quaternion, file.translation),
            created_at: file.timestamp,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct AnchorFile {
    anchor_id: String,
    quaternion: Quat,
    translation: Vec3,
    timestamp: f64,
}

/// Holds the single active anchor. Writers replace it wholesale; readers get a snapshot.
#[derive(Debug, Default)]
pub struct AnchorCell {
    inner: std::sync::RwLock<Option<Arc<AnchorRecord>>>,
}

impl AnchorCell {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn replace(&self, anchor: AnchorRecord) {
        *self.inner.write().unwrap_or_else(|e| e.into_inner()) = Some(Arc::new(anchor));
    }

    pub fn snapshot(&self) -> Option<Arc<AnchorRecord>> {
        self.inner.read().unwrap_or_else(|e| e.into_inner()).clone()
    }
}
