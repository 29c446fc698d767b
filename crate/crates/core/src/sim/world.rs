use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::msgs::{Header, LaserScan, OccupancyGrid};
use crate::par::{self, Exec};

use super::planner::{plan_on, InflatedGrid, PlanError, PlanResult};
use super::raycast::{cell_of, raycast};
use super::SimError;

pub const RANGE_MIN: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct WorldParams {
    pub scan_rate: f64,
    pub beams: usize,
    pub fov: f64,
    pub max_range: f64,
    pub noise_sigma: f64,
    pub v_max: f64,
    pub omega_max: f64,
    pub inflation_radius: f64,
    /// Lateral odometry error per metre travelled; 0 publishes ground truth.
    pub odom_drift: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            scan_rate: 10.0,
            beams: 360,
            fov: 2.0 * std::f64::consts::PI * (270.0 / 360.0),
            max_range: 5.6,
            noise_sigma: 0.01,
            v_max: 0.5,
            omega_max: 1.0,
            inflation_radius: 0.2,
            odom_drift: 0.0,
        }
    }
}

/// Planar robot pose in the map frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct PlanarPose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl PlanarPose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }
}

#[derive(Debug, Clone)]
struct ActivePath {
    waypoints: Vec<(f64, f64)>,
    next: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionStep {
    pub pose: PlanarPose,
    /// True on the step that arrives at the final waypoint.
    pub reached: bool,
}

/// Headings closer than this to the bearing count as aligned.
const HEADING_TOL: f64 = 1e-9;

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * std::f64::consts::PI);
    if a > std::f64::consts::PI {
        a -= 2.0 * std::f64::consts::PI;
    } else if a < -std::f64::consts::PI {
        a += 2.0 * std::f64::consts::PI;
    }
    a
}

#[derive(Debug, Clone)]
pub struct WorldModel {
    grid: OccupancyGrid,
    inflated: InflatedGrid,
    robot: PlanarPose,
    params: WorldParams,
    path: Option<ActivePath>,
    rng: ChaCha8Rng,
    sim_time: f64,
    scan_seq: u32,
    travelled: f64,
    exec: Exec,
}

impl WorldModel {
    pub fn new(grid: OccupancyGrid, robot: PlanarPose, params: WorldParams, seed: u64) -> Result<Self, SimError> {
        if !(params.scan_rate > 0.0) {
            return Err(SimError::BadParam("scan_rate must be > 0".into()));
        }
        if params.beams == 0 {
            return Err(SimError::BadParam("beams must be >= 1".into()));
        }
        if !(params.max_range > RANGE_MIN) {
            return Err(SimError::BadParam(format!("max_range must exceed {RANGE_MIN}")));
        }
        let inflated = InflatedGrid::new(&grid, params.inflation_radius);
        let mut w = WorldModel {
            grid,
            inflated,
            robot,
            params,
            path: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            sim_time: 0.0,
            scan_seq: 0,
            travelled: 0.0,
            exec: Exec::default(),
        };
        w.teleport(robot)?;
        Ok(w)
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    pub fn inflated(&self) -> &InflatedGrid {
        &self.inflated
    }

    pub fn params(&self) -> &WorldParams {
        &self.params
    }

    pub fn robot(&self) -> PlanarPose {
        self.robot
    }

    pub fn sim_time(&self) -> f64 {
        self.sim_time
    }

    pub fn set_sim_time(&mut self, t: f64) {
        self.sim_time = t;
    }

    pub fn has_path(&self) -> bool {
        self.path.is_some()
    }

    /// Odometry estimate: ground truth plus optional accumulated lateral drift.
    pub fn odometry_pose(&self) -> PlanarPose {
        let d = self.params.odom_drift * self.travelled;
        let (s, c) = self.robot.theta.sin_cos();
        PlanarPose::new(self.robot.x - s * d, self.robot.y + c * d, self.robot.theta)
    }

    /// Moves the robot, dropping any active path. The target cell must be free.
    pub fn teleport(&mut self, pose: PlanarPose) -> Result<(), SimError> {
        match cell_of(&self.grid, pose.x, pose.y) {
            Some((c, r)) if self.grid.get(c, r) == OccupancyGrid::FREE => {
                self.robot = pose;
                self.path = None;
                Ok(())
            }
            Some(_) => Err(SimError::RobotNotFree(pose.x, pose.y)),
            None => Err(SimError::OriginOutOfBounds(pose.x, pose.y)),
        }
    }

    /// One simulated scan from the current pose.
    pub fn simulate_scan(&mut self) -> LaserScan {
        let p = &self.params;
        let inc = if p.beams > 1 { p.fov / (p.beams - 1) as f64 } else { p.fov.max(1e-3) };
        let angle_min = -0.5 * p.fov;
        let (grid, robot, max_range) = (&self.grid, self.robot, p.max_range);
        let truth = par::map_range(self.exec, p.beams, |i| {
            let a = robot.theta + angle_min + i as f64 * inc;
            // The robot pose is always inside the grid.
            raycast(grid, (robot.x, robot.y), a, max_range).unwrap_or(max_range)
        });
        let ranges = if p.noise_sigma > 0.0 {
            let noise = Normal::new(0.0, p.noise_sigma).expect("sigma is positive");
            truth
                .into_iter()
                .map(|r| (r + noise.sample(&mut self.rng)).clamp(RANGE_MIN, max_range))
                .collect()
        } else {
            truth.into_iter().map(|r| r.clamp(RANGE_MIN, max_range)).collect()
        };
        self.scan_seq = self.scan_seq.wrapping_add(1);
        LaserScan {
            header: Header::new(self.scan_seq, self.sim_time, "base_laser"),
            angle_min,
            angle_max: angle_min + (p.beams - 1) as f64 * inc,
            angle_increment: inc,
            time_increment: 0.0,
            scan_time: 1.0 / p.scan_rate,
            range_min: RANGE_MIN,
            range_max: max_range,
            ranges,
            intensities: Vec::new(),
        }
    }

    /// Plans from the robot to `goal` and, on success, starts following the plan.
    pub fn set_goal(&mut self, goal: PlanarPose) -> Result<PlanResult, PlanError> {
        let plan = plan_on(&self.grid, &self.inflated, (self.robot.x, self.robot.y, self.robot.theta), (goal.x, goal.y, goal.theta))?;
        self.follow(&plan);
        Ok(plan)
    }

    pub fn follow(&mut self, plan: &PlanResult) {
        let waypoints: Vec<(f64, f64)> = plan.waypoints.iter().map(|&(x, y, _)| (x, y)).collect();
        self.path = (!waypoints.is_empty()).then_some(ActivePath { waypoints, next: 0 });
    }

    /// Rotate-then-translate pursuit of the next waypoint with clamped speeds.
    /// A waypoint counts as reached within half a cell.
    pub fn step_motion(&mut self, dt: f64) -> MotionStep {
        let reach = 0.5 * self.grid.resolution();
        let Some(active) = &mut self.path else {
            return MotionStep { pose: self.robot, reached: false };
        };
        while let Some(&(wx, wy)) = active.waypoints.get(active.next) {
            if (wx - self.robot.x).hypot(wy - self.robot.y) <= reach {
                active.next += 1;
            } else {
                break;
            }
        }
        let Some(&(wx, wy)) = active.waypoints.get(active.next) else {
            self.path = None;
            return MotionStep { pose: self.robot, reached: true };
        };
        let (dx, dy) = (wx - self.robot.x, wy - self.robot.y);
        let dist = dx.hypot(dy);
        let err = wrap_angle(dy.atan2(dx) - self.robot.theta);
        if err.abs() > HEADING_TOL {
            let turn = err.clamp(-self.params.omega_max * dt, self.params.omega_max * dt);
            self.robot.theta = wrap_angle(self.robot.theta + turn);
        } else {
            let step = (self.params.v_max * dt).min(dist);
            self.robot.x += dx / dist * step;
            self.robot.y += dy / dist * step;
            self.robot.theta = dy.atan2(dx);
            self.travelled += step;
        }
        let last = active.waypoints.len() - 1;
        let (gx, gy) = active.waypoints[last];
        let reached = active.next == last && (gx - self.robot.x).hypot(gy - self.robot.y) <= reach;
        if reached {
            self.path = None;
        }
        MotionStep { pose: self.robot, reached }
    }
}

/// Synthetic lab floor plan: a walled room with interior furniture and a partition.
pub fn demo_map(width: u32, height: u32, resolution: f64) -> OccupancyGrid {
    let mut g = OccupancyGrid::filled(width, height, resolution, OccupancyGrid::FREE);
    let (w, h) = (width as f64 * resolution, height as f64 * resolution);
    let mut fill_rect = |x0: f64, y0: f64, x1: f64, y1: f64| {
        let c0 = (x0 / resolution).floor().max(0.0) as usize;
        let r0 = (y0 / resolution).floor().max(0.0) as usize;
        let c1 = ((x1 / resolution).ceil() as usize).min(width as usize);
        let r1 = ((y1 / resolution).ceil() as usize).min(height as usize);
        for r in r0..r1 {
            for c in c0..c1 {
                g.set(c, r, OccupancyGrid::OCCUPIED);
            }
        }
    };
    let t = 0.1_f64.max(resolution);
    // Outer walls.
    fill_rect(0.0, 0.0, w, t);
    fill_rect(0.0, h - t, w, h);
    fill_rect(0.0, 0.0, t, h);
    fill_rect(w - t, 0.0, w, h);
    // Partition with a doorway.
    fill_rect(0.55 * w, 0.0, 0.55 * w + t, 0.35 * h);
    fill_rect(0.55 * w, 0.55 * h, 0.55 * w + t, h);
    // Furniture.
    fill_rect(0.15 * w, 0.65 * h, 0.30 * w, 0.80 * h);
    fill_rect(0.30 * w, 0.15 * h, 0.38 * w, 0.30 * h);
    fill_rect(0.72 * w, 0.20 * h, 0.85 * w, 0.28 * h);
    fill_rect(0.75 * w, 0.70 * h, 0.80 * w, 0.85 * h);
    g
}

/// Free pose nearest the middle of the grid with `clearance` metres to any obstacle or unknown cell.
pub fn free_pose_near_center(grid: &OccupancyGrid, clearance: f64) -> Option<PlanarPose> {
    let inflated = InflatedGrid::new(grid, clearance);
    let (cx, cy) = (grid.width() as f64 / 2.0, grid.height() as f64 / 2.0);
    let mut best: Option<(f64, usize, usize)> = None;
    for r in 0..grid.height() {
        for c in 0..grid.width() {
            if inflated.is_blocked(c, r) {
                continue;
            }
            let d = (c as f64 + 0.5 - cx).powi(2) + (r as f64 + 0.5 - cy).powi(2);
            if best.map_or(true, |(bd, _, _)| d < bd) {
                best = Some((d, c, r));
            }
        }
    }
    best.map(|(_, c, r)| {
        let (x, y) = super::raycast::cell_center(grid, c, r);
        PlanarPose::new(x, y, 0.0)
    })
}
