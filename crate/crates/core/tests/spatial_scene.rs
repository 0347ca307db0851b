use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use proptest::prelude::*;
use soundscape::audio::SegmentFile;
use soundscape::clustering::ClusterAssignment;
use soundscape::scene::{self, Colors, SceneConfig, SceneManifest, ViolationKind};
use soundscape::spatial::{self, VerticalFit};

fn coords_strategy() -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3).prop_map(|(x, y)| [x, y]), 2..60)
        .prop_filter("needs an x range", |c| c.iter().any(|p| p[0] != c[0][0]))
}

fn bundle(dir: &Path, coords: &[[f64; 2]], k: usize) -> SceneManifest {
    fs::create_dir_all(dir.join("audio")).unwrap();
    fs::write(dir.join("pano.jpg"), b"jpg").unwrap();
    let files: Vec<SegmentFile> = (0..coords.len())
        .map(|index| {
            let path = format!("audio/s_{index:04}.wav");
            fs::write(dir.join(&path), b"wav").unwrap();
            SegmentFile { index, path }
        })
        .collect();
    let assignment = ClusterAssignment {
        labels: (0..coords.len()).map(|i| i % k).collect(),
        n_clusters: k,
        eps_used: 1.0,
        min_samples: 5,
        core_flags: vec![true; coords.len()],
        reassigned: vec![],
        names: BTreeMap::from([(0, "first".to_string())]),
    };
    let points = spatial::cylindrical_map(coords, 5.0).unwrap();
    scene::assemble_scene(
        &points,
        &assignment,
        &files,
        dir,
        &SceneConfig {
            source_id: "s".into(),
            radius: 5.0,
            duration_s: 10.0,
            panorama: "pano.jpg".into(),
            colors: Colors::default(),
        },
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn mapping_invariants(coords in coords_strategy(), r in 0.5f64..50.0) {
        let pts = spatial::cylindrical_map(&coords, r).unwrap();
        for (p, c) in pts.iter().zip(&coords) {
            prop_assert!((p.horizontal_radius() - r).abs() <= 1e-9 * r.max(1.0));
            prop_assert_eq!(p.z.to_bits(), c[1].to_bits());
            prop_assert!((0.0..=std::f64::consts::TAU).contains(&p.theta));
        }
        for i in 0..coords.len() {
            for j in 0..coords.len() {
                if coords[i][0] < coords[j][0] {
                    prop_assert!(pts[i].theta <= pts[j].theta);
                }
            }
        }
    }

    #[test]
    fn vertical_fit_preserves_order_and_range(coords in coords_strategy(), lo in -5.0f64..0.0, span in 0.1f64..5.0) {
        let pts = spatial::cylindrical_map(&coords, 5.0).unwrap();
        let fit = spatial::vertical_fit(&pts, Some(VerticalFit { z_lo: lo, z_hi: lo + span })).unwrap();
        for (a, b) in pts.iter().zip(&fit) {
            prop_assert!(b.z >= lo - 1e-12 && b.z <= lo + span + 1e-12);
            prop_assert_eq!((a.x, a.y, a.theta), (b.x, b.y, b.theta));
        }
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                if pts[i].z < pts[j].z {
                    prop_assert!(fit[i].z <= fit[j].z);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn exported_scenes_validate_clean(coords in coords_strategy(), k in 1usize..5) {
        let dir = tempfile::tempdir().unwrap();
        let m = bundle(dir.path(), &coords, k);
        let path = dir.path().join("scene.json");
        scene::export_scene(&m, &path).unwrap();
        prop_assert_eq!(scene::validate_scene(&path).unwrap(), vec![]);
        let back = scene::load_scene(&path).unwrap();
        prop_assert_eq!(back.points.len(), m.points.len());
        prop_assert_eq!(scene::to_canonical_json(&back).unwrap(), fs::read_to_string(&path).unwrap());
    }
}

#[test]
fn export_is_canonical() {
    let dir = tempfile::tempdir().unwrap();
    let m = bundle(dir.path(), &[[0.0, 0.123456789012], [1.0, -2.0], [2.0, 1.0]], 2);
    let text = scene::to_canonical_json(&m).unwrap();
    assert_eq!(text, scene::to_canonical_json(&m.clone()).unwrap());
    assert!(text.contains("\"z\": 0.123456789\n"));
    let keys: Vec<&str> = text
        .lines()
        .filter(|l| l.starts_with("  \""))
        .map(|l| l.trim().split('"').nth(1).unwrap())
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    assert_eq!(m.points[0].cluster_name.as_deref(), Some("first"));
    assert_eq!(m.points[1].cluster_name, None);
    assert_eq!(m.seam_diagnostic, Some([0, 2]));
}

fn kinds(path: &Path) -> Vec<ViolationKind> {
    scene::validate_scene(path)
        .unwrap()
        .into_iter()
        .map(|v| v.kind)
        .collect()
}

#[test]
fn corrupted_manifests_report_violations() {
    let dir = tempfile::tempdir().unwrap();
    let m = bundle(dir.path(), &[[0.0, 0.0], [1.0, 1.0], [3.0, -1.0]], 2);
    let path = dir.path().join("scene.json");

    let mut bad = m.clone();
    bad.points[1].position.x *= 1.001;
    scene::export_scene(&bad, &path).unwrap();
    assert_eq!(kinds(&path), [ViolationKind::PositionRadiusMismatch]);

    let mut bad = m.clone();
    bad.points[2].cluster = 2;
    bad.colors.playing = "red".into();
    scene::export_scene(&bad, &path).unwrap();
    assert_eq!(
        kinds(&path),
        [ViolationKind::InvalidColor, ViolationKind::ClusterOutOfRange]
    );

    let mut bad = m.clone();
    bad.version = "0.9".into();
    bad.points[0].id = 1;
    bad.seam_diagnostic = Some([0, 9]);
    scene::export_scene(&bad, &path).unwrap();
    assert_eq!(
        kinds(&path),
        [
            ViolationKind::UnsupportedVersion,
            ViolationKind::PointIdMismatch,
            ViolationKind::DuplicatePointId,
            ViolationKind::SeamDiagnosticUnknownId,
            ViolationKind::SeamDiagnosticUnknownId,
        ]
    );
    assert!(scene::load_scene(&path).is_err());

    scene::export_scene(&m, &path).unwrap();
    fs::remove_file(dir.path().join("audio/s_0001.wav")).unwrap();
    fs::remove_file(dir.path().join("pano.jpg")).unwrap();
    assert_eq!(
        kinds(&path),
        [ViolationKind::MissingPanorama, ViolationKind::MissingAudio]
    );
}

#[test]
fn nine_digit_rounding_stays_within_radius_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let coords: Vec<[f64; 2]> = (0..50).map(|i| [(i as f64 * 0.7311).sin() * 13.0, i as f64]).collect();
    let m = bundle(dir.path(), &coords, 3);
    let path = dir.path().join("scene.json");
    scene::export_scene(&m, &path).unwrap();
    let back = scene::load_scene(&path).unwrap();
    for p in &back.points {
        let r = p.position.x.hypot(p.position.y);
        assert!((r - 5.0).abs() <= scene::RADIUS_REL_TOL * 5.0);
    }
}
