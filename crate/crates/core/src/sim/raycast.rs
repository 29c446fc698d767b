//! Grid traversal raycasting (Amanatides & Woo).

use crate::geom::Vec3;
use crate::msgs::OccupancyGrid;

use super::SimError;

/// Cells at or above this value stop a ray. Unknown cells (-1) let it pass.
pub const RAY_BLOCKING_THRESHOLD: i8 = 50;

/// Converts a map-frame point into fractional cell coordinates of `grid`.
pub fn map_to_cell_coords(grid: &OccupancyGrid, x: f64, y: f64) -> (f64, f64) {
    let local = grid.info.origin.to_transform().invert().transform_point(Vec3::new(x, y, 0.0));
    (local.x / grid.resolution(), local.y / grid.resolution())
}

/// Cell containing the map-frame point `(x, y)`, if inside the grid.
pub fn cell_of(grid: &OccupancyGrid, x: f64, y: f64) -> Option<(usize, usize)> {
    let (gx, gy) = map_to_cell_coords(grid, x, y);
    if gx >= 0.0 && gy >= 0.0 && gx < grid.width() as f64 && gy < grid.height() as f64 {
        Some((gx as usize, gy as usize))
    } else {
        None
    }
}

/// Map-frame center of cell `(col, row)`.
pub fn cell_center(grid: &OccupancyGrid, col: usize, row: usize) -> (f64, f64) {
    let res = grid.resolution();
    let p = grid
        .info
        .origin
        .to_transform()
        .transform_point(Vec3::new((col as f64 + 0.5) * res, (row as f64 + 0.5) * res, 0.0));
    (p.x, p.y)
}

fn blocks(v: i8) -> bool {
    v >= RAY_BLOCKING_THRESHOLD
}

/// Distance from `origin` (map frame, metres) along heading `angle` to the boundary
/// of the first blocking cell, or `max_range` if nothing is hit within range or
/// inside the grid.
pub fn raycast(grid: &OccupancyGrid, origin: (f64, f64), angle: f64, max_range: f64) -> Result<f64, SimError> {
    let (gx, gy) = map_to_cell_coords(grid, origin.0, origin.1);
    let (w, h) = (grid.width() as i64, grid.height() as i64);
    if !(gx >= 0.0 && gy >= 0.0 && gx < w as f64 && gy < h as f64) {
        return Err(SimError::OriginOutOfBounds(origin.0, origin.1));
    }
    let res = grid.resolution();
    let local_angle = angle - grid.info.origin.yaw();
    let (dy, dx) = local_angle.sin_cos();
    let (mut ix, mut iy) = (gx.floor() as i64, gy.floor() as i64);
    if blocks(grid.get(ix as usize, iy as usize)) {
        return Ok(0.0);
    }
    let max_t = max_range / res;

    let step_x: i64 = if dx > 0.0 { 1 } else { -1 };
    let step_y: i64 = if dy > 0.0 { 1 } else { -1 };
    let t_delta_x = if dx != 0.0 { 1.0 / dx.abs() } else { f64::INFINITY };
    let t_delta_y = if dy != 0.0 { 1.0 / dy.abs() } else { f64::INFINITY };
    let mut t_max_x = if dx > 0.0 {
        (ix as f64 + 1.0 - gx) * t_delta_x
    } else if dx < 0.0 {
        (gx - ix as f64) * t_delta_x
    } else {
        f64::INFINITY
    };
    let mut t_max_y = if dy > 0.0 {
        (iy as f64 + 1.0 - gy) * t_delta_y
    } else if dy < 0.0 {
        (gy - iy as f64) * t_delta_y
    } else {
        f64::INFINITY
    };

    loop {
        let t = if t_max_x < t_max_y {
            ix += step_x;
            let t = t_max_x;
            t_max_x += t_delta_x;
            t
        } else {
            iy += step_y;
            let t = t_max_y;
            t_max_y += t_delta_y;
            t
        };
        if t > max_t || ix < 0 || iy < 0 || ix >= w || iy >= h {
            return Ok(max_range);
        }
        if blocks(grid.get(ix as usize, iy as usize)) {
            return Ok((t * res).min(max_range));
        }
    }
}
