mod common;

use std::io::Write;
use std::path::Path;

use common::*;
use navviz::msgs::{
    load_map_file, load_map_yaml, parse_msg, save_map_file, Header, LaserScan, MsgError, NavMessage, NavPath,
    OccupancyGrid, Odometry, Pose, PoseMessage, PoseStamped, PoseWithCovariance, PoseWithCovarianceStamped,
    TwistWithCovariance,
};
use navviz::sim::demo_map;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

fn header<R: Rng>(rng: &mut R, frame: &str) -> Header {
    let mut h = Header::new(rng.gen(), 0.0, frame);
    h.stamp.secs = rng.gen_range(0..2_000_000_000);
    h.stamp.nsecs = rng.gen_range(0..1_000_000_000);
    h
}

fn pose<R: Rng>(rng: &mut R) -> Pose {
    Pose::from_transform(&random_transform(rng))
}

fn random_message<R: Rng>(rng: &mut R) -> NavMessage {
    match rng.gen_range(0..6) {
        0 => {
            let n = rng.gen_range(1..400);
            NavMessage::LaserScan(LaserScan {
                header: header(rng, "laser"),
                angle_min: -1.0,
                angle_max: -1.0 + (n - 1) as f64 * 0.01,
                angle_increment: 0.01,
                time_increment: rng.gen(),
                scan_time: rng.gen(),
                range_min: 0.05,
                range_max: 10.0,
                ranges: (0..n)
                    .map(|_| match rng.gen_range(0..10) {
                        0 => f64::NAN,
                        1 => f64::INFINITY,
                        2 => f64::NEG_INFINITY,
                        _ => rng.gen_range(0.0..12.0),
                    })
                    .collect(),
                intensities: (0..rng.gen_range(0..3) * n).map(|_| rng.gen()).collect(),
            })
        }
        1 => {
            let (w, h, res) = (rng.gen_range(1..40), rng.gen_range(1..40), rng.gen_range(0.01..1.0));
            let mut g = random_grid(rng, w, h, res, 0.3);
            g.header = header(rng, "map");
            g.info.origin = pose(rng);
            NavMessage::OccupancyGrid(g)
        }
        2 => {
            let frame = "map";
            NavMessage::Path(NavPath {
                header: header(rng, frame),
                poses: (0..rng.gen_range(0..30))
                    .map(|_| PoseStamped { header: header(rng, frame), pose: pose(rng) })
                    .collect(),
            })
        }
        3 => NavMessage::Odometry(Odometry {
            header: header(rng, "odom"),
            child_frame_id: "base_link".into(),
            pose: PoseWithCovariance { pose: pose(rng), covariance: (0..36).map(|_| rng.gen()).collect() },
            twist: TwistWithCovariance::default(),
        }),
        4 => NavMessage::Pose(PoseMessage::Stamped(PoseStamped { header: header(rng, "map"), pose: pose(rng) })),
        _ => NavMessage::Pose(PoseMessage::WithCovariance(PoseWithCovarianceStamped {
            header: header(rng, "map"),
            pose: PoseWithCovariance { pose: pose(rng), covariance: (0..36).map(|_| rng.gen()).collect() },
        })),
    }
}

#[test]
fn messages_round_trip_through_json_text() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    for _ in 0..2_000 {
        let m = random_message(&mut rng);
        let text = serde_json::to_string(&m.to_json()).unwrap();
        let back = parse_msg(m.msg_type(), &serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}

#[test]
fn schema_violations_name_the_field() {
    let mut msg = NavMessage::Pose(PoseMessage::Stamped(PoseStamped::default())).to_json();
    msg["pose"]["position"]["x"] = json!("east");
    match parse_msg("geometry_msgs/PoseStamped", &msg) {
        Err(MsgError::SchemaViolation(path, _)) => assert_eq!(path, "pose.position.x"),
        other => panic!("{other:?}"),
    }
    let mut path = NavPath { header: Header::new(0, 0.0, "map"), poses: vec![PoseStamped::default()] };
    path.poses[0].header.frame_id = "odom".into();
    assert!(matches!(
        parse_msg("nav_msgs/Path", &serde_json::to_value(&path).unwrap()),
        Err(MsgError::SchemaViolation(f, _)) if f == "poses[0].header.frame_id"
    ));
}

fn write_pgm(path: &Path, w: usize, h: usize, pixels: &[u8]) {
    let mut f = std::fs::File::create(path).unwrap();
    write!(f, "P5\n# test\n{w} {h}\n255\n").unwrap();
    f.write_all(pixels).unwrap();
}

/// Trinary value of one pixel under the standard thresholds.
fn classify_oracle(v: u8, negate: bool, occ: f64, free: f64) -> i8 {
    let p = if negate { v as f64 / 255.0 } else { (255.0 - v as f64) / 255.0 };
    if p >= occ {
        100
    } else if p <= free {
        0
    } else {
        -1
    }
}

#[test]
fn checkerboard_map_matches_pixel_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let (w, h) = (37usize, 23usize);
    let levels = [0u8, 10, 50, 89, 90, 128, 204, 205, 230, 254, 255];
    let pixels: Vec<u8> = (0..w * h).map(|i| levels[((i % w) / 3 + (i / w) / 2) % levels.len()]).collect();
    write_pgm(&dir.path().join("board.pgm"), w, h, &pixels);
    for negate in [false, true] {
        let yaml = dir.path().join(format!("board{}.yaml", negate as u8));
        std::fs::write(
            &yaml,
            format!("image: board.pgm\nresolution: 0.05\norigin: [-1.0, 2.0, 0.0]\nnegate: {}\noccupied_thresh: 0.65\nfree_thresh: 0.196\n", negate as u8),
        )
        .unwrap();
        let g = load_map_yaml(&yaml).unwrap();
        assert_eq!((g.width(), g.height()), (w, h));
        for row in 0..h {
            for col in 0..w {
                // Image rows run top-down; grid rows run bottom-up.
                let want = classify_oracle(pixels[(h - 1 - row) * w + col], negate, 0.65, 0.196);
                assert_eq!(g.get(col, row), want, "({col}, {row}) negate={negate}");
            }
        }
        assert_eq!(g.info.origin.position.x, -1.0);
        assert_eq!(g.info.origin.position.y, 2.0);
    }
}

#[test]
fn lab_sized_map_has_expected_extent() {
    let dir = tempfile::tempdir().unwrap();
    let grid = demo_map(1060, 448, 0.02);
    let yaml = save_map_file(&grid, dir.path(), "lab").unwrap();
    let g = load_map_yaml(&yaml).unwrap();
    assert_eq!((g.width(), g.height()), (1060, 448));
    let (ex, ey) = g.extent();
    assert!((ex - 21.2).abs() < 1e-9 && (ey - 8.96).abs() < 1e-9, "{ex} x {ey}");
    assert_eq!(g.data, grid.data);
}

#[test]
fn map_file_errors() {
    let dir = tempfile::tempdir().unwrap();
    let yaml = dir.path().join("m.yaml");
    assert!(matches!(load_map_yaml(&yaml), Err(MsgError::FileMissing(_))));

    std::fs::write(&yaml, "image: m.pgm\norigin: [0, 0, 0]\n").unwrap();
    assert!(matches!(load_map_yaml(&yaml), Err(MsgError::BadYamlField(f, _)) if f == "resolution"));

    std::fs::write(&yaml, "image: m.pgm\nresolution: 0.1\norigin: [0, 0]\n").unwrap();
    assert!(matches!(load_map_yaml(&yaml), Err(MsgError::BadYamlField(f, _)) if f == "origin"));

    std::fs::write(&yaml, "image: m.pgm\nresolution: 0.1\norigin: [0, 0, 0]\n").unwrap();
    assert!(matches!(load_map_yaml(&yaml), Err(MsgError::FileMissing(_))));

    write_pgm(&dir.path().join("m.pgm"), 0, 0, &[]);
    assert_eq!(load_map_yaml(&yaml), Err(MsgError::ImageSizeZero));

    write_pgm(&dir.path().join("other.pgm"), 2, 1, &[0, 255]);
    let g = load_map_file(&yaml, &dir.path().join("other.pgm")).unwrap();
    assert_eq!(g.data, vec![OccupancyGrid::OCCUPIED, OccupancyGrid::FREE]);
}
