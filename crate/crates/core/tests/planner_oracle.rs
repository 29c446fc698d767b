mod common;

use common::*;
use navviz::msgs::OccupancyGrid;
use navviz::sim::planner::{astar_cells, plan_path, InflatedGrid, PlanError};
use navviz::sim::raycast::cell_center;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn blocked_mask(g: &OccupancyGrid) -> Vec<bool> {
    g.data.iter().map(|&v| v >= 50 || v < 0).collect()
}

#[test]
fn astar_cost_equals_dijkstra_on_random_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (mut reachable, mut unreachable) = (0, 0);
    for case in 0..200 {
        let g = random_grid(&mut rng, 50, 50, 0.1, 0.3);
        let mask = blocked_mask(&g);
        let free: Vec<usize> = (0..mask.len()).filter(|&i| !mask[i]).collect();
        let s = free[rng.gen_range(0..free.len())];
        let t = free[rng.gen_range(0..free.len())];
        let (s, t) = ((s % 50, s / 50), (t % 50, t / 50));
        let oracle = dijkstra_oracle(&mask, 50, 50, s, t);
        let (sx, sy) = cell_center(&g, s.0, s.1);
        let (tx, ty) = cell_center(&g, t.0, t.1);
        match (plan_path(&g, (sx, sy, 0.0), (tx, ty, 0.0), 0.0), oracle) {
            (Ok(plan), Some(cost)) => {
                reachable += 1;
                assert!((plan.cost - cost * 0.1).abs() < 1e-9, "case {case}: {} vs {}", plan.cost, cost * 0.1);
                assert_eq!(plan.cells.first(), Some(&s));
                assert_eq!(plan.cells.last(), Some(&t));
                for w in plan.cells.windows(2) {
                    let (dc, dr) = (w[1].0.abs_diff(w[0].0), w[1].1.abs_diff(w[0].1));
                    assert!(dc <= 1 && dr <= 1 && dc + dr > 0);
                    assert!(!mask[w[1].1 * 50 + w[1].0]);
                    if dc == 1 && dr == 1 {
                        assert!(!mask[w[0].1 * 50 + w[1].0] && !mask[w[1].1 * 50 + w[0].0], "corner cut");
                    }
                }
            }
            (Err(PlanError::Unreachable), None) => unreachable += 1,
            (got, want) => panic!("case {case}: planner {got:?}, oracle {want:?}"),
        }
    }
    assert!(reachable > 0 && unreachable > 0, "{reachable} reachable, {unreachable} unreachable");
}

#[test]
fn blocked_endpoints_are_reported() {
    let mut g = OccupancyGrid::filled(10, 10, 1.0, 0);
    g.set(0, 0, 100);
    g.set(9, 9, -1);
    assert_eq!(plan_path(&g, (0.5, 0.5, 0.0), (5.5, 5.5, 0.0), 0.0), Err(PlanError::StartOccupied));
    assert_eq!(plan_path(&g, (5.5, 5.5, 0.0), (9.5, 9.5, 0.0), 0.0), Err(PlanError::GoalOccupied));
    assert!(matches!(plan_path(&g, (-1.0, 0.5, 0.0), (5.5, 5.5, 0.0), 0.0), Err(PlanError::StartOutOfBounds(..))));
    assert!(matches!(plan_path(&g, (5.5, 5.5, 0.0), (5.5, 50.0, 0.0), 0.0), Err(PlanError::GoalOutOfBounds(..))));
}

#[test]
fn inflation_matches_disk_dilation() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..20 {
        let g = random_grid(&mut rng, 30, 30, 0.1, 0.05);
        let radius = rng.gen_range(0.0..0.35);
        let inflated = InflatedGrid::new(&g, radius);
        let mask = blocked_mask(&g);
        let cells = (radius / 0.1).ceil() as i64 + 1;
        for r in 0..30i64 {
            for c in 0..30i64 {
                let mut want = false;
                for dr in -cells..=cells {
                    for dc in -cells..=cells {
                        let (nc, nr) = (c + dc, r + dr);
                        if nc < 0 || nr < 0 || nc >= 30 || nr >= 30 {
                            continue;
                        }
                        if mask[(nr * 30 + nc) as usize] && ((dc * dc + dr * dr) as f64).sqrt() * 0.1 <= radius + 1e-12 {
                            want = true;
                        }
                    }
                }
                assert_eq!(inflated.is_blocked(c as usize, r as usize), want, "cell ({c},{r}) radius {radius}");
            }
        }
    }
}

#[test]
fn waypoints_are_cell_centers_with_goal_heading() {
    let g = small_room();
    let plan = plan_path(&g, (1.05, 1.05, 0.0), (4.05, 4.05, 1.25), 0.1).unwrap();
    let last = *plan.waypoints.last().unwrap();
    assert!((last.0 - 4.05).abs() < 1e-9 && (last.1 - 4.05).abs() < 1e-9 && last.2 == 1.25);
    let cells = astar_cells(&InflatedGrid::new(&g, 0.1), (10, 10), (40, 40)).unwrap();
    assert_eq!(cells, plan.cells);
}
