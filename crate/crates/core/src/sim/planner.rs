//! A* global planner on an inflated 8-connected occupancy grid.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

use crate::msgs::OccupancyGrid;

use super::raycast::{cell_center, cell_of};

/// Cells at or above this value (and unknown cells) are obstacles for planning.
pub const PLAN_BLOCKING_THRESHOLD: i8 = 50;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("start ({0:.3}, {1:.3}) is outside the map")]
    StartOutOfBounds(f64, f64),
    #[error("goal ({0:.3}, {1:.3}) is outside the map")]
    GoalOutOfBounds(f64, f64),
    #[error("start cell is occupied")]
    StartOccupied,
    #[error("goal cell is occupied")]
    GoalOccupied,
    #[error("goal is unreachable")]
    Unreachable,
}

/// Planning obstacles: blocking and unknown cells dilated by the robot radius.
#[derive(Debug, Clone, PartialEq)]
pub struct InflatedGrid {
    pub width: usize,
    pub height: usize,
    blocked: Vec<bool>,
}

impl InflatedGrid {
    pub fn new(grid: &OccupancyGrid, inflation_radius: f64) -> Self {
        let (w, h) = (grid.width(), grid.height());
        let r_cells = (inflation_radius.max(0.0) / grid.resolution()).floor() as i64;
        let r2 = (inflation_radius.max(0.0) / grid.resolution()).powi(2);
        let offsets: Vec<(i64, i64)> = (-r_cells..=r_cells)
            .flat_map(|dy| (-r_cells..=r_cells).map(move |dx| (dx, dy)))
            .filter(|&(dx, dy)| ((dx * dx + dy * dy) as f64) <= r2 + 1e-9)
            .collect();
        let mut blocked = vec![false; w * h];
        for row in 0..h {
            for col in 0..w {
                let v = grid.data[row * w + col];
                if v >= PLAN_BLOCKING_THRESHOLD || v < 0 {
                    for &(dx, dy) in &offsets {
                        let (c, r) = (col as i64 + dx, row as i64 + dy);
                        if c >= 0 && r >= 0 && (c as usize) < w && (r as usize) < h {
                            blocked[r as usize * w + c as usize] = true;
                        }
                    }
                }
            }
        }
        InflatedGrid { width: w, height: h, blocked }
    }

    /// Wraps an explicit obstacle mask (row-major).
    pub fn from_mask(width: usize, height: usize, blocked: Vec<bool>) -> Self {
        assert_eq!(blocked.len(), width * height);
        InflatedGrid { width, height, blocked }
    }

    pub fn is_blocked(&self, col: usize, row: usize) -> bool {
        self.blocked[row * self.width + col]
    }

    /// 8-connected moves out of `(col, row)`; diagonals may not cut a blocked corner.
    pub fn neighbors(&self, col: usize, row: usize) -> impl Iterator<Item = (usize, usize, bool)> + '_ {
        const MOVES: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];
        MOVES.iter().filter_map(move |&(dx, dy)| {
            let (c, r) = (col as i64 + dx, row as i64 + dy);
            if c < 0 || r < 0 || c as usize >= self.width || r as usize >= self.height {
                return None;
            }
            let (c, r) = (c as usize, r as usize);
            if self.is_blocked(c, r) {
                return None;
            }
            let diagonal = dx != 0 && dy != 0;
            if diagonal && (self.is_blocked(c, row) || self.is_blocked(col, r)) {
                return None;
            }
            Some((c, r, diagonal))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    /// Cell-center poses `(x, y, heading)` in the map frame, start to goal.
    pub waypoints: Vec<(f64, f64, f64)>,
    pub cells: Vec<(usize, usize)>,
    /// Path length in metres.
    pub cost: f64,
    pub straight_steps: usize,
    pub diagonal_steps: usize,
}

/// Path length of `straight` unit moves and `diagonal` √2 moves at `resolution`.
/// Every cost reported by the planner goes through this one expression.
pub fn step_cost(straight: usize, diagonal: usize, resolution: f64) -> f64 {
    (straight as f64 + diagonal as f64 * SQRT_2) * resolution
}

#[derive(PartialEq)]
struct Open {
    f: f64,
    g: f64,
    idx: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, o: &Self) -> Ordering {
        // Min-heap on f, then prefer deeper nodes (larger g) to cut ties short.
        o.f.total_cmp(&self.f).then(self.g.total_cmp(&o.g)).then(o.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// A* between two cells of `grid`. Edge costs are 1 and √2 (cell units) and the
/// heuristic is straight-line distance, so the returned cell path is of minimal length.
pub fn astar_cells(
    grid: &InflatedGrid,
    start: (usize, usize),
    goal: (usize, usize),
) -> Result<Vec<(usize, usize)>, PlanError> {
    if grid.is_blocked(start.0, start.1) {
        return Err(PlanError::StartOccupied);
    }
    if grid.is_blocked(goal.0, goal.1) {
        return Err(PlanError::GoalOccupied);
    }
    let w = grid.width;
    let n = w * grid.height;
    let idx = |c: usize, r: usize| r * w + c;
    let h = |c: usize, r: usize| {
        let dx = c as f64 - goal.0 as f64;
        let dy = r as f64 - goal.1 as f64;
        (dx * dx + dy * dy).sqrt()
    };
    let mut g_score = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    let s = idx(start.0, start.1);
    g_score[s] = 0.0;
    open.push(Open { f: h(start.0, start.1), g: 0.0, idx: s });
    let goal_idx = idx(goal.0, goal.1);

    while let Some(Open { g, idx: cur, .. }) = open.pop() {
        if closed[cur] {
            continue;
        }
        closed[cur] = true;
        if cur == goal_idx {
            let mut cells = vec![(cur % w, cur / w)];
            let mut at = cur;
            while parent[at] != usize::MAX {
                at = parent[at];
                cells.push((at % w, at / w));
            }
            cells.reverse();
            return Ok(cells);
        }
        let (c, r) = (cur % w, cur / w);
        for (nc, nr, diagonal) in grid.neighbors(c, r) {
            let ni = idx(nc, nr);
            if closed[ni] {
                continue;
            }
            let ng = g + if diagonal { SQRT_2 } else { 1.0 };
            if ng < g_score[ni] {
                g_score[ni] = ng;
                parent[ni] = cur;
                open.push(Open { f: ng + h(nc, nr), g: ng, idx: ni });
            }
        }
    }
    Err(PlanError::Unreachable)
}

fn count_steps(cells: &[(usize, usize)]) -> (usize, usize) {
    cells.windows(2).fold((0, 0), |(s, d), w| {
        if w[0].0 != w[1].0 && w[0].1 != w[1].1 {
            (s, d + 1)
        } else {
            (s + 1, d)
        }
    })
}

/// Plans from map-frame `start` to `goal` (each `(x, y, heading)`). Waypoint
/// headings point along the path; the last one takes the goal heading.
pub fn plan_path(
    grid: &OccupancyGrid,
    start: (f64, f64, f64),
    goal: (f64, f64, f64),
    inflation_radius: f64,
) -> Result<PlanResult, PlanError> {
    plan_on(grid, &InflatedGrid::new(grid, inflation_radius), start, goal)
}

/// Same as [`plan_path`] against a precomputed inflation of `grid`.
pub fn plan_on(
    grid: &OccupancyGrid,
    inflated: &InflatedGrid,
    start: (f64, f64, f64),
    goal: (f64, f64, f64),
) -> Result<PlanResult, PlanError> {
    let s = cell_of(grid, start.0, start.1).ok_or(PlanError::StartOutOfBounds(start.0, start.1))?;
    let g = cell_of(grid, goal.0, goal.1).ok_or(PlanError::GoalOutOfBounds(goal.0, goal.1))?;
    let cells = astar_cells(inflated, s, g)?;
    Ok(result_from_cells(grid, cells, goal.2))
}

fn result_from_cells(grid: &OccupancyGrid, cells: Vec<(usize, usize)>, goal_heading: f64) -> PlanResult {
    let centers: Vec<(f64, f64)> = cells.iter().map(|&(c, r)| cell_center(grid, c, r)).collect();
    let waypoints = centers
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| {
            let heading = match centers.get(i + 1) {
                Some(&(nx, ny)) => (ny - y).atan2(nx - x),
                None => goal_heading,
            };
            (x, y, heading)
        })
        .collect();
    let (straight, diagonal) = count_steps(&cells);
    PlanResult {
        waypoints,
        cost: step_cost(straight, diagonal, grid.resolution()),
        cells,
        straight_steps: straight,
        diagonal_steps: diagonal,
    }
}
