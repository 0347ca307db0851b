use std::fs;
use std::path::PathBuf;

use proptest::prelude::*;
use soundscape::scene::{self, Colors, Position, SceneManifest, ScenePoint, AXIS_CONVENTION, SCENE_VERSION};
use soundscape::trajectory::{self, TrajectoryError, TrajectoryEvent, TrajectoryLog};

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

fn ring_scene(clusters: &[usize], n_clusters: usize) -> SceneManifest {
    let n = clusters.len();
    SceneManifest {
        version: SCENE_VERSION.into(),
        source_id: "ring".into(),
        axis_convention: AXIS_CONVENTION.into(),
        radius: 5.0,
        panorama: "panorama.png".into(),
        n_clusters,
        colors: Colors::default(),
        points: clusters
            .iter()
            .enumerate()
            .map(|(id, &cluster)| {
                let theta = std::f64::consts::TAU * id as f64 / n as f64;
                ScenePoint {
                    id,
                    position: Position {
                        x: 5.0 * theta.cos(),
                        y: 5.0 * theta.sin(),
                        z: 0.0,
                    },
                    theta,
                    audio: format!("audio/ring_{id:04}.wav"),
                    cluster,
                    cluster_name: None,
                    duration_s: 10.0,
                }
            })
            .collect(),
        seam_diagnostic: None,
    }
}

#[test]
fn handcrafted_log_matches_golden_stats() {
    let scene = scene::load_scene(golden("scene_3points.json")).unwrap();
    let log = trajectory::parse_log(golden("trajectory_3events.json"), &scene).unwrap();
    let stats = trajectory::compute_stats(&log, &scene).unwrap();

    let expected = trajectory::load_stats(golden("stats_3events.json")).unwrap();
    assert_eq!(stats, expected);
    assert_eq!(
        stats.to_json().unwrap(),
        fs::read_to_string(golden("stats_3events.json")).unwrap()
    );
    assert_eq!(
        stats.dwell_csv().unwrap(),
        fs::read_to_string(golden("dwell_3events.csv")).unwrap()
    );
    assert_eq!(
        stats.transitions_csv().unwrap(),
        fs::read_to_string(golden("transitions_3events.csv")).unwrap()
    );
}

#[test]
fn export_writes_three_files_that_read_back() {
    let scene = scene::load_scene(golden("scene_3points.json")).unwrap();
    let log = trajectory::parse_log(golden("trajectory_3events.json"), &scene).unwrap();
    let stats = trajectory::compute_stats(&log, &scene).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = trajectory::export_stats(&stats, dir.path()).unwrap();
    let names: Vec<String> = files
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, ["stats.json", "dwell.csv", "transitions.csv"]);
    assert_eq!(trajectory::load_stats(dir.path().join("stats.json")).unwrap(), stats);
}

#[test]
fn bad_logs_are_rejected() {
    let scene = ring_scene(&[0, 0, 1], 2);
    let unknown = r#"{"session_id":"s","scene_ref":"x","total_duration_ms":1,
        "events":[{"point_id":0,"t_start_ms":0,"dwell_ms":1},{"point_id":7,"t_start_ms":1,"dwell_ms":1}]}"#;
    match trajectory::parse_log_str(unknown, &scene) {
        Err(TrajectoryError::UnknownPoints(ids)) => assert_eq!(ids, [7]),
        other => panic!("{other:?}"),
    }
    let unordered = r#"{"session_id":"s","scene_ref":"x","total_duration_ms":1,
        "events":[{"point_id":0,"t_start_ms":5,"dwell_ms":1},{"point_id":1,"t_start_ms":4,"dwell_ms":1}]}"#;
    assert!(matches!(
        trajectory::parse_log_str(unordered, &scene),
        Err(TrajectoryError::Unordered { .. })
    ));
    let negative = r#"{"session_id":"s","scene_ref":"x","total_duration_ms":1,
        "events":[{"point_id":0,"t_start_ms":0,"dwell_ms":-3}]}"#;
    assert!(matches!(
        trajectory::parse_log_str(negative, &scene),
        Err(TrajectoryError::Parse(_))
    ));
    let version = r#"{"version":"2.0","session_id":"s","scene_ref":"x","total_duration_ms":0,"events":[]}"#;
    assert!(matches!(
        trajectory::parse_log_str(version, &scene),
        Err(TrajectoryError::Version(_))
    ));
}

#[test]
fn empty_log_gives_zero_ratios() {
    let scene = ring_scene(&[0, 1], 2);
    let log = TrajectoryLog {
        version: "1.0".into(),
        session_id: "s".into(),
        scene_ref: "x".into(),
        events: vec![],
        total_duration_ms: 0,
    };
    let s = trajectory::compute_stats(&log, &scene).unwrap();
    assert_eq!(
        (s.n_events, s.coverage, s.within_cluster_ratio, s.revisit_rate),
        (0, 0.0, 0.0, 0.0)
    );
    assert!(s.dwell_by_cluster.is_empty());
    assert_eq!(s.transition_matrix, vec![vec![0; 2]; 2]);
}

#[test]
fn circling_across_the_seam_counts_as_monotone() {
    // Eight points evenly spaced; walk 6 -> 7 -> 0 -> 1 crosses theta = 0.
    let scene = ring_scene(&[0; 8], 1);
    let events = [6, 7, 0, 1]
        .iter()
        .enumerate()
        .map(|(k, &point_id)| TrajectoryEvent {
            point_id,
            t_start_ms: 1000 * k as u64,
            dwell_ms: 500,
        })
        .collect();
    let log = TrajectoryLog {
        version: "1.0".into(),
        session_id: "s".into(),
        scene_ref: "x".into(),
        events,
        total_duration_ms: 4000,
    };
    let s = trajectory::compute_stats(&log, &scene).unwrap();
    assert_eq!(s.angular_monotonicity, 1.0);
    assert_eq!(s.within_cluster_ratio, 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn dwell_and_transitions_are_conserved(
        clusters in prop::collection::vec(0usize..4, 1..15),
        picks in prop::collection::vec((any::<prop::sample::Index>(), 0u64..10_000, 0u64..5_000), 0..40),
    ) {
        let scene = ring_scene(&clusters, 4);
        let mut t = 0;
        let events: Vec<TrajectoryEvent> = picks
            .iter()
            .map(|(idx, gap, dwell)| {
                t += gap;
                TrajectoryEvent { point_id: idx.index(clusters.len()), t_start_ms: t, dwell_ms: *dwell }
            })
            .collect();
        let total: u64 = events.iter().map(|e| e.dwell_ms).sum();
        let n = events.len();
        let log = TrajectoryLog {
            version: "1.0".into(),
            session_id: "p".into(),
            scene_ref: "x".into(),
            events,
            total_duration_ms: t,
        };
        let s = trajectory::compute_stats(&log, &scene).unwrap();
        prop_assert_eq!(s.dwell_by_cluster.values().sum::<u64>(), total);
        prop_assert_eq!(s.total_dwell_ms, total);
        let transitions: u64 = s.transition_matrix.iter().flatten().sum();
        prop_assert_eq!(transitions as usize, n.saturating_sub(1));
        prop_assert!((0.0..=1.0).contains(&s.coverage));
        prop_assert!((0.0..=1.0).contains(&s.angular_monotonicity));
    }
}
