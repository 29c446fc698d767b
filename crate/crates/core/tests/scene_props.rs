mod common;

use common::*;
use navviz::geom::{align_anchor, AnchorRecord};
use navviz::msgs::{self, Header, LaserScan, NavMessage, NavPath, OccupancyGrid, Pose, PoseStamped};
use navviz::pipeline::{
    grid_to_points, path_to_points, scan_to_points, Channel, InboundMessage, ManualClock, SceneConfig, SceneState,
    VisualizationMode,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

fn inbound(topic: &str, m: &NavMessage) -> InboundMessage {
    InboundMessage {
        topic: topic.into(),
        msg_type: m.msg_type().into(),
        msg: m.to_json(),
        received_at: 0.0,
    }
}

fn scan<R: Rng>(rng: &mut R) -> LaserScan {
    let n = rng.gen_range(1..200);
    LaserScan {
        header: Header::new(rng.gen(), 0.0, "laser"),
        angle_min: -1.0,
        angle_max: -1.0 + (n - 1) as f64 * 0.01,
        angle_increment: 0.01,
        time_increment: 0.0,
        scan_time: 0.1,
        range_min: 0.05,
        range_max: 8.0,
        ranges: (0..n).map(|_| rng.gen_range(0.0..9.0)).collect(),
        intensities: Vec::new(),
    }
}

fn path<R: Rng>(rng: &mut R) -> NavPath {
    NavPath {
        header: Header::new(0, 0.0, "map"),
        poses: (0..rng.gen_range(0..80))
            .map(|i| PoseStamped { header: Header::new(0, 0.0, "map"), pose: Pose::planar(i as f64 * 0.1, rng.gen(), 0.0) })
            .collect(),
    }
}

/// Reference model: what each channel should show given everything seen so far.
#[derive(Default)]
struct Model {
    grid: Option<OccupancyGrid>,
    path: Option<NavPath>,
    scan: Option<(LaserScan, Pose)>,
}

#[test]
fn scene_matches_reference_model_under_random_operations() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    for _ in 0..150 {
        let clock = ManualClock::new(0.0);
        let mut anchor = AnchorRecord::identity();
        let mut mode = VisualizationMode::from_index(rng.gen_range(1..=5)).unwrap();
        let mut scene = SceneState::new(mode, anchor.clone(), SceneConfig::default(), 0.0);
        let mut model = Model::default();
        let mut robot = Pose::default();
        let mut revisions = [0u64; 3];
        let mut map_seq = 0u32;
        let mut t = 0.0;

        for _ in 0..40 {
            match rng.gen_range(0..10) {
                0 => {
                    mode = VisualizationMode::from_index(rng.gen_range(1..=5)).unwrap();
                    scene.set_mode(mode);
                    // Scans are transient; a re-enabled scan channel waits for the next scan.
                    if !mode.enables(Channel::Scan) {
                        model.scan = None;
                    }
                }
                1 => {
                    anchor = align_anchor(&random_transform(&mut rng), &random_transform(&mut rng));
                    scene.set_anchor(anchor.clone());
                    model.scan = None;
                }
                _ => {
                    let mut batch = Vec::new();
                    let mut newest_scan = None;
                    let mut map_changed = false;
                    let mut got_path = false;
                    for _ in 0..rng.gen_range(0..5) {
                        match rng.gen_range(0..6) {
                            0 => {
                                let s = scan(&mut rng);
                                batch.push(inbound("/scan", &NavMessage::LaserScan(s.clone())));
                                newest_scan = Some(s);
                            }
                            1 => {
                                if rng.gen_bool(0.5) || model.grid.is_none() {
                                    map_seq += 1;
                                    let mut g = random_grid(&mut rng, 20, 15, 0.1, 0.3);
                                    g.header.seq = map_seq;
                                    model.grid = Some(g);
                                    map_changed = true;
                                }
                                batch.push(inbound("/map", &NavMessage::OccupancyGrid(model.grid.clone().unwrap())));
                            }
                            2 => {
                                let p = path(&mut rng);
                                batch.push(inbound("/global_plan", &NavMessage::Path(p.clone())));
                                model.path = Some(p);
                                got_path = true;
                            }
                            3 => {
                                robot = Pose::from_transform(&random_planar(&mut rng));
                                let m = msgs::PoseWithCovarianceStamped {
                                    header: Header::new(0, 0.0, "map"),
                                    pose: msgs::PoseWithCovariance { pose: robot, ..Default::default() },
                                };
                                batch.push(inbound("/amcl_pose", &NavMessage::Pose(msgs::PoseMessage::WithCovariance(m))));
                            }
                            4 => batch.push(InboundMessage {
                                topic: "/scan".into(),
                                msg_type: msgs::LASER_SCAN.into(),
                                msg: json!({"ranges": "nope"}),
                                received_at: 0.0,
                            }),
                            _ => {}
                        }
                    }
                    let bad = batch.iter().filter(|m| m.msg.get("ranges") == Some(&json!("nope"))).count();
                    t += rng.gen_range(0.001..0.1);
                    clock.set(t);
                    let stats = scene.tick(batch, &clock);
                    assert!(stats.tick_duration > 0.0);
                    assert_eq!(stats.malformed, bad);
                    assert_eq!(stats.path_applied_at.is_some(), got_path);
                    if let Some(s) = newest_scan {
                        if mode.enables(Channel::Scan) {
                            model.scan = Some((s, robot));
                        }
                    }
                    if !map_changed {
                        assert!(!stats.channels_updated.contains(&Channel::Map));
                    }
                }
            }

            for (i, c) in Channel::ALL.into_iter().enumerate() {
                let ps = scene.channel(c);
                assert!(ps.revision >= revisions[i]);
                revisions[i] = ps.revision;
                assert_eq!(ps.color, c.color());
                let want = if !mode.enables(c) {
                    Vec::new()
                } else {
                    match c {
                        Channel::Map => model.grid.as_ref().map(|g| grid_to_points(g, 50, &anchor).points).unwrap_or_default(),
                        Channel::Path => model.path.as_ref().map(|p| path_to_points(p, 10, &anchor).points).unwrap_or_default(),
                        Channel::Scan => model
                            .scan
                            .as_ref()
                            .map(|(s, r)| scan_to_points(s, &r.to_transform(), &anchor).points)
                            .unwrap_or_default(),
                    }
                };
                assert_eq!(ps.points.len(), want.len(), "{c:?} in {mode:?}");
                for (a, b) in ps.points.iter().zip(&want) {
                    assert!(dist(*a, *b) < 1e-9);
                }
            }
        }
    }
}

#[test]
fn same_map_revision_is_converted_once() {
    let clock = ManualClock::new(0.0);
    let mut scene = SceneState::new(VisualizationMode::ScanMap, AnchorRecord::identity(), SceneConfig::default(), 0.0);
    let g = small_room();
    let occupied = g.data.iter().filter(|&&v| v >= 50).count();
    let m = inbound("/map", &NavMessage::OccupancyGrid(g.clone()));
    for i in 0..5 {
        clock.set(i as f64 + 1.0);
        let stats = scene.tick(vec![m.clone(), m.clone()], &clock);
        assert_eq!(stats.channels_updated.contains(&Channel::Map), i == 0);
        assert_eq!(scene.channel(Channel::Map).len(), occupied);
    }
    assert_eq!(scene.channel(Channel::Map).revision, 1);
}

#[test]
fn mode_one_shows_nothing() {
    let clock = ManualClock::new(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(62);
    let mut scene = SceneState::new(VisualizationMode::None, AnchorRecord::identity(), SceneConfig::default(), 0.0);
    let batch = vec![
        inbound("/scan", &NavMessage::LaserScan(scan(&mut rng))),
        inbound("/map", &NavMessage::OccupancyGrid(small_room())),
        inbound("/global_plan", &NavMessage::Path(path(&mut rng))),
    ];
    let stats = scene.tick(batch, &clock);
    assert!(stats.channels_updated.is_empty());
    assert_eq!(scene.total_points(), 0);
    assert!(stats.path_applied_at.is_some());
    assert!(scene.last_path().is_some());
}
