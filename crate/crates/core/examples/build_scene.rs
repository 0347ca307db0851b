// Assemble, export and validate a scene manifest by hand.

use std::collections::BTreeMap;
use std::error::Error;
use std::fs;

use soundscape::audio::{self, PcmBuffer};
use soundscape::clustering;
use soundscape::scene::{self, Colors, SceneConfig};
use soundscape::spatial;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let bundle = dir.path();
    fs::write(bundle.join("panorama.png"), b"placeholder")?;

    let pcm = PcmBuffer::new(vec![0.0; 8 * 800], 8_000)?;
    let set = audio::segment(&pcm, 0.1, "demo")?;
    let files = audio::write_segments(&set, bundle)?;

    let coords: Vec<[f64; 2]> = (0..8).map(|i| [i as f64, (i % 3) as f64]).collect();
    let raw = clustering::dbscan(&coords, 1.5, 2)?;
    let names = BTreeMap::from([(0, "low".to_string())]);
    let assignment = clustering::assign_noise(&raw, &coords)?.with_names(names);

    let points = spatial::cylindrical_map(&coords, 5.0)?;
    let manifest = scene::assemble_scene(
        &points,
        &assignment,
        &files,
        bundle,
        &SceneConfig {
            source_id: "demo".into(),
            radius: 5.0,
            duration_s: set.segment_duration_s,
            panorama: "panorama.png".into(),
            colors: Colors::default(),
        },
    )?;
    let path = bundle.join("scene.json");
    scene::export_scene(&manifest, &path)?;
    let violations = scene::validate_scene(&path)?;
    println!(
        "{} points in {} clusters, seam {:?}, {} violations",
        manifest.points.len(),
        manifest.n_clusters,
        manifest.seam_diagnostic,
        violations.len()
    );
    print!(
        "{}",
        fs::read_to_string(&path)?
            .lines()
            .take(12)
            .collect::<Vec<_>>()
            .join("\n")
    );
    println!("\n  ...");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
