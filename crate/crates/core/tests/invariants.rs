//! Whole-system properties on a small square room.

use std::collections::BTreeSet;

use markerslam_core::geometry::{FrameId, Pose};
use markerslam_core::semantic::SemanticDb;
use markerslam_core::sim::{dead_reckon, visible_markers, CameraModel, NoiseModel, Scenario};
use markerslam_core::slam::{self, config::Sigmas, SlamConfig};
use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;
use serde_json::json;

/// A 4 m square room with two markers per wall and a two-lap flight
/// around its center.
fn room() -> (Scenario, SemanticDb) {
    let walls = [
        ("W1", [-1.0, 0.0, 0.0], 0.0, [0.0, 2.0]),
        ("W2", [1.0, 0.0, 0.0], -4.0, [4.0, 2.0]),
        ("W3", [0.0, -1.0, 0.0], 0.0, [2.0, 0.0]),
        ("W4", [0.0, 1.0, 0.0], -4.0, [2.0, 4.0]),
    ];
    let mut markers = Vec::new();
    let mut wall_json = Vec::new();
    let mut db_markers = Vec::new();
    for (k, (id, n, offset, c)) in walls.iter().enumerate() {
        let along = [-n[1], n[0]];
        let mut ids = Vec::new();
        for (j, (s, z)) in [(-0.5, 1.0), (0.6, 1.4)].iter().enumerate() {
            let mid = 10 * (k as u32 + 1) + j as u32;
            markers.push(json!({ "id": mid, "center": [c[0] + s * along[0], c[1] + s * along[1], z], "normal": n }));
            db_markers.push(json!({ "id": mid, "element": id, "kind": "wall" }));
            ids.push(mid);
        }
        wall_json.push(json!({
            "id": id, "normal": n, "offset": offset,
            "extent": { "center": [c[0], c[1], 1.25], "width": 4.0, "height": 2.5 },
            "markers": ids,
        }));
    }
    let mut waypoints = Vec::new();
    for i in 0..=24 {
        let a = (i % 12) as f64 * 30f64.to_radians();
        waypoints.push(json!({ "position": [2.0 + a.cos(), 2.0 + a.sin(), 1.2], "yaw_deg": (i as f64) * 30.0 }));
    }
    let scenario = json!({
        "name": "square",
        "world": { "markers": markers, "walls": wall_json },
        "noise": { "odom_sigma_t": 0.003, "odom_sigma_r": 0.0015, "marker_sigma_t": 0.02, "marker_sigma_r": 0.0175, "seed": 3 },
        "waypoints": waypoints,
        "speed": 0.25,
        "extrinsic": { "t": [0.0, 0.0, 0.0], "q": [0.5, -0.5, 0.5, -0.5] },
    });
    let db = json!({
        "markers": db_markers,
        "places": [{ "id": "R1", "kind": "room", "walls": ["W1", "W2", "W3", "W4"] }],
    });
    (Scenario::parse(&scenario.to_string()).unwrap(), SemanticDb::parse(&db.to_string()).unwrap())
}

fn config(s: &Scenario, noise: &NoiseModel) -> SlamConfig {
    SlamConfig { sigmas: Sigmas::from_noise(noise), ..SlamConfig::default() }.with_poses(&s.extrinsic, &s.start_pose())
}

#[test]
fn zero_noise_dead_reckoning_tracks_ground_truth() {
    let (s, _) = room();
    let (gt, log) = s.simulate(&NoiseModel::zero(0)).unwrap();
    let dr = dead_reckon(&s.start_pose(), &log);
    assert!(dr.len() >= 1000, "{} steps", dr.len());
    let mut worst_step: f64 = 0.0;
    let mut worst: f64 = 0.0;
    let samples = gt.samples();
    for (k, (t, pose)) in dr.iter().enumerate() {
        let truth = samples.iter().find(|g| g.t == *t).unwrap();
        worst = worst.max((pose.translation() - truth.pose.translation()).norm());
        if k > 0 {
            let step = dr[k - 1].1.inverse().compose(pose).unwrap();
            let prev = samples.iter().find(|g| g.t == dr[k - 1].0).unwrap();
            let true_step = prev.pose.inverse().compose(&truth.pose).unwrap();
            worst_step = worst_step.max((step.translation() - true_step.translation()).norm());
        }
    }
    assert!(worst_step <= 1e-12, "per-step error {worst_step}");
    assert!(worst <= 1e-9, "accumulated error {worst}");
}

#[test]
fn zero_noise_map_is_coplanar_and_consistent() {
    let (s, db) = room();
    let noise = NoiseModel::zero(0);
    let (_, log) = s.simulate(&noise).unwrap();
    let out = slam::run(&log, Some(&db), &config(&s, &noise)).unwrap();
    assert_eq!(out.graph.walls.len(), 4);
    for w in &out.graph.walls {
        assert!((w.normal.norm() - 1.0).abs() <= 1e-9);
        for m in &w.markers {
            let c = out.graph.marker(*m).unwrap().pose.translation();
            assert!(w.distance(&c).abs() <= 1e-9, "marker {m} is {} m off {}", w.distance(&c), w.id);
        }
    }
    // Places carry exactly the database walls, all of them detected.
    let detected: BTreeSet<&str> = out.graph.walls.iter().map(|w| w.id.as_str()).collect();
    let expected: Vec<(String, Vec<String>)> =
        db.places().map(|(id, _, walls)| (id.to_string(), walls.to_vec())).collect();
    let got: Vec<(String, Vec<String>)> = out.graph.places.iter().map(|p| (p.id.clone(), p.walls.clone())).collect();
    assert_eq!(got, expected);
    assert!(got.iter().flat_map(|(_, w)| w).all(|w| detected.contains(w.as_str())));
}

#[test]
fn identical_inputs_give_identical_states() {
    let (s, db) = room();
    let (_, log) = s.simulate(&s.noise).unwrap();
    let cfg = config(&s, &s.noise);
    let a = slam::run(&log, Some(&db), &cfg).unwrap();
    let b = slam::run(&log, Some(&db), &cfg).unwrap();
    let c = slam::run_threaded(&log, Some(&db), &cfg).unwrap();
    assert_eq!(a.graph, b.graph);
    assert_eq!(a.graph, c.graph);
    assert_eq!(a.report, c.report);
}

#[test]
fn randomness_comes_from_the_seed_alone() {
    let (s, _) = room();
    let (_, a) = s.simulate(&s.noise).unwrap();
    let (_, b) = s.simulate(&s.noise).unwrap();
    assert_eq!(a.to_jsonl(), b.to_jsonl());
    let other = NoiseModel { seed: s.noise.seed + 1, ..s.noise };
    let (_, c) = s.simulate(&other).unwrap();
    assert_ne!(a.to_jsonl(), c.to_jsonl());
}

#[test]
fn noisy_run_beats_dead_reckoning() {
    let (s, db) = room();
    let (gt, log) = s.simulate(&s.noise).unwrap();
    let out = slam::run(&log, Some(&db), &config(&s, &s.noise)).unwrap();
    let ours = markerslam_core::eval::evaluate(&out.trajectory, &gt, 0.02, true).unwrap().stats;
    let base = markerslam_core::eval::evaluate(&out.initial, &gt, 0.02, true).unwrap().stats;
    assert!(ours.rmse < base.rmse, "{} vs {}", ours.rmse, base.rmse);
    for r in std::iter::once(&out.report.metric).chain(&out.report.semantic) {
        assert!(r.accepted_costs().windows(2).all(|w| w[1] <= w[0]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]
    #[test]
    fn visibility_is_monotone_in_fov(
        x in 0.5f64..3.5, y in 0.5f64..3.5, z in 0.5f64..2.0, yaw in -3.2f64..3.2,
        h in 20.0f64..120.0, v in 20.0f64..100.0, dh in 0.0f64..40.0, dv in 0.0f64..40.0,
    ) {
        let (s, _) = room();
        let pose = Pose::new(UnitQuaternion::from_euler_angles(0.0, 0.0, yaw), Vector3::new(x, y, z), FrameId::Robot, FrameId::World);
        let narrow = CameraModel { fov_h: h, fov_v: v, ..CameraModel::default() };
        let wide = CameraModel { fov_h: (h + dh).min(179.0), fov_v: (v + dv).min(179.0), ..CameraModel::default() };
        let seen = |cam: &CameraModel| -> BTreeSet<u32> {
            visible_markers(&pose, &s.extrinsic, &s.world, cam).into_iter().map(|(id, _)| id).collect()
        };
        prop_assert!(seen(&narrow).is_subset(&seen(&wide)));
    }
}
