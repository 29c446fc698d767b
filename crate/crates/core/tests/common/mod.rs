#![allow(dead_code)]

use std::collections::BinaryHeap;
use std::cmp::Reverse;

use nalgebra::{Isometry2, Isometry3, Point3, Quaternion, Translation3, UnitQuaternion, Vector2, Vector3};
use navviz::geom::{align_anchor, AnchorRecord, Quat, RigidTransform, Vec3};
use navviz::msgs::{Header, LaserScan, OccupancyGrid, Pose};
use navviz::sim::{serve, PlanarPose, RunningServer, ServerConfig, WorldParams};
use navviz::proto::{Op, ProtocolEnvelope};
use proptest::prelude::*;
use rand::Rng;
use serde_json::{Map, Value};

pub fn random_quat<R: Rng>(rng: &mut R) -> Quat {
    loop {
        let q = Quat::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        if q.norm() > 0.1 {
            return q.normalized();
        }
    }
}

pub fn random_transform<R: Rng>(rng: &mut R) -> RigidTransform {
    let t = Vec3::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0), rng.gen_range(-3.0..3.0));
    RigidTransform::new(random_quat(rng), t)
}

pub fn random_planar<R: Rng>(rng: &mut R) -> RigidTransform {
    RigidTransform::from_planar(
        rng.gen_range(-20.0..20.0),
        rng.gen_range(-20.0..20.0),
        rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
    )
}

/// The same transform as an nalgebra isometry, built from raw components.
pub fn iso(t: &RigidTransform) -> Isometry3<f64> {
    let q = t.rotation();
    let p = t.translation();
    Isometry3::from_parts(
        Translation3::new(p.x, p.y, p.z),
        UnitQuaternion::from_quaternion(Quaternion::new(q.w, q.x, q.y, q.z)),
    )
}

pub fn apply(m: &Isometry3<f64>, p: Vec3) -> Vec3 {
    let q = m * Point3::new(p.x, p.y, p.z);
    Vec3::new(q.x, q.y, q.z)
}

/// Largest entry difference between the homogeneous matrices of two transforms.
pub fn matrix_distance(a: &Isometry3<f64>, b: &Isometry3<f64>) -> f64 {
    (a.to_homogeneous() - b.to_homogeneous()).abs().max()
}

pub fn transform_distance(a: &RigidTransform, b: &RigidTransform) -> f64 {
    matrix_distance(&iso(a), &iso(b))
}

pub fn dist(a: Vec3, b: Vec3) -> f64 {
    (a - b).norm()
}

/// Per-beam trigonometric projection of a scan into the headset frame.
pub fn scan_oracle(scan: &LaserScan, sensor_in_map: &RigidTransform, anchor: &AnchorRecord) -> Vec<Vec3> {
    let m = iso(&anchor.t_holo_map) * iso(sensor_in_map);
    let mut out = Vec::new();
    for (i, &r) in scan.ranges.iter().enumerate() {
        if !r.is_finite() || r < scan.range_min || r > scan.range_max {
            continue;
        }
        let a = scan.angle_min + i as f64 * scan.angle_increment;
        out.push(apply(&m, Vec3::new(r * a.cos(), r * a.sin(), 0.0)));
    }
    out
}

/// Brute-force enumeration of cells at or above `threshold`, as headset-frame cell centers.
pub fn grid_oracle(grid: &OccupancyGrid, threshold: i8, anchor: &AnchorRecord) -> Vec<Vec3> {
    let m = iso(&anchor.t_holo_map) * iso(&grid.info.origin.to_transform());
    let res = grid.info.resolution;
    let mut out = Vec::new();
    for row in 0..grid.info.height as usize {
        for col in 0..grid.info.width as usize {
            let v = grid.data[row * grid.info.width as usize + col];
            if v >= 0 && v >= threshold {
                out.push(apply(&m, Vec3::new((col as f64 + 0.5) * res, (row as f64 + 0.5) * res, 0.0)));
            }
        }
    }
    out
}

pub fn random_grid<R: Rng>(rng: &mut R, w: u32, h: u32, res: f64, density: f64) -> OccupancyGrid {
    let mut g = OccupancyGrid::filled(w, h, res, 0);
    for v in g.data.iter_mut() {
        let u: f64 = rng.gen();
        *v = if u < density {
            rng.gen_range(50..=100)
        } else if u < density + 0.05 {
            -1
        } else {
            rng.gen_range(0..50)
        };
    }
    g
}

/// Shortest 8-connected path length in cells (unit and √2 moves, no cutting past
/// a blocked orthogonal neighbour), or `None` when unreachable.
pub fn dijkstra_oracle(blocked: &[bool], w: usize, h: usize, start: (usize, usize), goal: (usize, usize)) -> Option<f64> {
    let free = |c: i64, r: i64| c >= 0 && r >= 0 && (c as usize) < w && (r as usize) < h && !blocked[r as usize * w + c as usize];
    if !free(start.0 as i64, start.1 as i64) || !free(goal.0 as i64, goal.1 as i64) {
        return None;
    }
    let mut best = vec![f64::INFINITY; w * h];
    // Costs are non-negative, so ordering by the bit pattern orders by value.
    let mut heap = BinaryHeap::new();
    best[start.1 * w + start.0] = 0.0;
    heap.push(Reverse((0f64.to_bits(), start.0, start.1)));
    while let Some(Reverse((bits, c, r))) = heap.pop() {
        let d = f64::from_bits(bits);
        if (c, r) == goal {
            return Some(d);
        }
        if d > best[r * w + c] {
            continue;
        }
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let (nc, nr) = (c as i64 + dc, r as i64 + dr);
                if !free(nc, nr) {
                    continue;
                }
                if dc != 0 && dr != 0 && (!free(nc, r as i64) || !free(c as i64, nr)) {
                    continue;
                }
                let nd = d + if dc != 0 && dr != 0 { std::f64::consts::SQRT_2 } else { 1.0 };
                let k = nr as usize * w + nc as usize;
                if nd < best[k] {
                    best[k] = nd;
                    heap.push(Reverse((nd.to_bits(), nc as usize, nr as usize)));
                }
            }
        }
    }
    None
}

/// Range to the first cell with value ≥ 50 by stepping `step` metres along the ray.
/// Leaving the grid or exceeding `max_range` gives `max_range`.
pub fn march_oracle(grid: &OccupancyGrid, origin: (f64, f64), angle: f64, max_range: f64, step: f64) -> f64 {
    let o = grid.info.origin.to_transform().to_planar();
    let to_grid = Isometry2::new(Vector2::new(o.0, o.1), o.2).inverse();
    let res = grid.info.resolution;
    let (w, h) = (grid.info.width as i64, grid.info.height as i64);
    let mut t = 0.0;
    while t <= max_range {
        let p = to_grid * nalgebra::Point2::new(origin.0 + t * angle.cos(), origin.1 + t * angle.sin());
        let (c, r) = ((p.x / res).floor() as i64, (p.y / res).floor() as i64);
        if c < 0 || r < 0 || c >= w || r >= h {
            return max_range;
        }
        if grid.data[(r * w + c) as usize] >= 50 {
            return t;
        }
        t += step;
    }
    max_range
}

pub fn vec3_of(v: Vector3<f64>) -> Vec3 {
    Vec3::new(v.x, v.y, v.z)
}

pub fn planar_pose(x: f64, y: f64, th: f64) -> Pose {
    Pose::planar(x, y, th)
}

/// A walled 50×50 room at 0.1 m/cell with a single pillar.
pub fn small_room() -> OccupancyGrid {
    let mut g = OccupancyGrid::filled(50, 50, 0.1, 0);
    for i in 0..50 {
        g.set(i, 0, 100);
        g.set(i, 49, 100);
        g.set(0, i, 100);
        g.set(49, i, 100);
    }
    for r in 20..30 {
        for c in 20..30 {
            g.set(c, r, 100);
        }
    }
    g
}

pub async fn spawn_sim(grid: OccupancyGrid, fixed_step: Option<f64>, noise: f64, seed: u64) -> RunningServer {
    let mut cfg = ServerConfig::new(grid, PlanarPose::new(1.0, 1.0, 0.0));
    cfg.world = WorldParams {
        noise_sigma: noise,
        inflation_radius: 0.1,
        ..WorldParams::default()
    };
    cfg.fixed_step = fixed_step;
    cfg.seed = seed;
    serve(cfg).await.expect("simulator starts")
}

pub fn random_scan<R: Rng>(rng: &mut R) -> LaserScan {
    let n = rng.gen_range(1..=1081);
    let angle_min = rng.gen_range(-3.2..0.0);
    let inc = rng.gen_range(0.001..0.02);
    let range_max = rng.gen_range(3.0..30.0);
    let ranges = (0..n)
        .map(|_| match rng.gen_range(0..20) {
            0 => f64::NAN,
            1 => f64::INFINITY,
            2 => range_max + 1.0,
            3 => 0.001,
            _ => rng.gen_range(0.05..range_max),
        })
        .collect();
    LaserScan {
        header: Header::new(1, 0.0, "base_laser"),
        angle_min,
        angle_max: angle_min + (n - 1) as f64 * inc,
        angle_increment: inc,
        time_increment: 0.0,
        scan_time: 0.1,
        range_min: 0.05,
        range_max,
        ranges,
        intensities: Vec::new(),
    }
}

pub fn random_anchor<R: Rng>(rng: &mut R) -> AnchorRecord {
    align_anchor(&random_transform(rng), &random_transform(rng))
}

pub fn json_value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::from),
        any::<i64>().prop_map(Value::from),
        any::<u64>().prop_map(Value::from),
        any::<f64>().prop_filter("finite", |f| f.is_finite()).prop_map(Value::from),
        ".{0,12}".prop_map(Value::from),
        prop_oneof![Just("NaN"), Just("Infinity"), Just("-Infinity")].prop_map(Value::from),
    ];
    leaf.prop_recursive(3, 48, 6, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..6).prop_map(Value::Array),
            prop::collection::vec(("[a-z_]{1,8}", inner), 0..6).prop_map(|kv| Value::Object(kv.into_iter().collect::<Map<_, _>>())),
        ]
    })
}

pub fn envelope() -> impl Strategy<Value = ProtocolEnvelope> {
    let topic = "/[a-zA-Z0-9_/ ]{0,24}";
    let ty = "[a-z_]{1,10}/[A-Za-z]{1,12}";
    (
        0usize..5,
        topic,
        ty,
        json_value(),
        proptest::option::of(".{0,16}"),
        proptest::option::of(any::<u64>()),
        proptest::option::of(any::<u64>()),
    )
        .prop_map(|(op, topic, ty, msg, id, throttle, queue)| {
            let mut e = match Op::ALL[op] {
                Op::Advertise => ProtocolEnvelope::advertise(&topic, &ty),
                Op::Unadvertise => ProtocolEnvelope::unadvertise(&topic),
                Op::Publish => ProtocolEnvelope::publish(&topic, msg),
                Op::Subscribe => ProtocolEnvelope::subscribe(&topic, &ty),
                Op::Unsubscribe => ProtocolEnvelope::unsubscribe(&topic),
            }
            .unwrap();
            if let Some(id) = id {
                e = e.with_id(id);
            }
            if let Some(t) = throttle {
                e = e.with_throttle_rate(t);
            }
            if let Some(q) = queue {
                e = e.with_queue_length(q);
            }
            e
        })
}
