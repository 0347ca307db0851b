// Exploration statistics for a short trajectory log.

use std::error::Error;

use soundscape::scene::{Colors, Position, SceneManifest, ScenePoint, AXIS_CONVENTION, SCENE_VERSION};
use soundscape::trajectory;

fn point(id: usize, theta: f64, cluster: usize) -> ScenePoint {
    ScenePoint {
        id,
        position: Position {
            x: 5.0 * theta.cos(),
            y: 5.0 * theta.sin(),
            z: 0.0,
        },
        theta,
        audio: format!("audio/demo_{id:04}.wav"),
        cluster,
        cluster_name: None,
        duration_s: 10.0,
    }
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let scene = SceneManifest {
        version: SCENE_VERSION.into(),
        source_id: "demo".into(),
        axis_convention: AXIS_CONVENTION.into(),
        radius: 5.0,
        panorama: "panorama.png".into(),
        n_clusters: 2,
        colors: Colors::default(),
        points: vec![point(0, 0.5, 0), point(1, 1.0, 0), point(2, 4.0, 1)],
        seam_diagnostic: None,
    };
    let log = trajectory::parse_log_str(
        r#"{
          "session_id": "demo-session",
          "scene_ref": "scene.json",
          "total_duration_ms": 7000,
          "events": [
            {"point_id": 0, "t_start_ms": 0, "dwell_ms": 2000},
            {"point_id": 1, "t_start_ms": 2500, "dwell_ms": 3000},
            {"point_id": 2, "t_start_ms": 6000, "dwell_ms": 1000}
          ]
        }"#,
        &scene,
    )?;
    let stats = trajectory::compute_stats(&log, &scene)?;
    print!("{}", stats.to_json()?);
    print!("{}", stats.dwell_csv()?);
    print!("{}", stats.transitions_csv()?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
