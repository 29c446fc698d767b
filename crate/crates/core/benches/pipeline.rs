use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use navviz::geom::{align_anchor, from_planar};
use navviz::msgs::{Header, LaserScan};
use navviz::par::Exec;
use navviz::pipeline::{grid_to_points_with, scan_to_points_with};
use navviz::sim::{demo_map, free_pose_near_center, WorldModel, WorldParams};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn scan(beams: usize) -> LaserScan {
    let inc = 1.5 * std::f64::consts::PI / (beams - 1) as f64;
    LaserScan {
        header: Header::new(0, 0.0, "base_laser"),
        angle_min: -0.75 * std::f64::consts::PI,
        angle_max: 0.75 * std::f64::consts::PI,
        angle_increment: inc,
        time_increment: 0.0,
        scan_time: 0.1,
        range_min: 0.05,
        range_max: 30.0,
        ranges: (0..beams).map(|i| 1.0 + (i % 97) as f64 * 0.1).collect(),
        intensities: Vec::new(),
    }
}

fn conversions(c: &mut Criterion) {
    let anchor = align_anchor(&from_planar(0.3, -0.2, 0.4), &from_planar(-4.0, 2.0, 1.1));
    let sensor = from_planar(1.0, 2.0, 0.5);
    let mut g = c.benchmark_group("scan_to_points");
    for beams in [360, 1081, 8192] {
        let s = scan(beams);
        for (name, exec) in MODES {
            g.bench_with_input(BenchmarkId::new(name, beams), &s, |b, s| {
                b.iter(|| scan_to_points_with(exec, black_box(s), &sensor, &anchor))
            });
        }
    }
    g.finish();

    let grid = demo_map(1060, 448, 0.02);
    let mut g = c.benchmark_group("grid_to_points");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(name, "1060x448"), |b| {
            b.iter(|| grid_to_points_with(exec, black_box(&grid), 65, &anchor))
        });
    }
    g.finish();
}

fn raycasting(c: &mut Criterion) {
    let grid = demo_map(1060, 448, 0.02);
    let start = free_pose_near_center(&grid, 0.2).unwrap();
    let mut g = c.benchmark_group("simulate_scan");
    for beams in [360, 1081] {
        for (name, exec) in MODES {
            let params = WorldParams { beams, noise_sigma: 0.0, ..WorldParams::default() };
            let mut world = WorldModel::new(grid.clone(), start, params, 0).unwrap().with_exec(exec);
            g.bench_function(BenchmarkId::new(name, beams), |b| b.iter(|| world.simulate_scan()));
        }
    }
    g.finish();
}

criterion_group!(benches, conversions, raycasting);
criterion_main!(benches);
