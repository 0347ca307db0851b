// The whole pipeline through `pipeline::run`, from a WAV file to a
// validated scene bundle.

use std::error::Error;
use std::fs;

use soundscape::audio;
use soundscape::pipeline::{self, PipelineConfig, TsneGrid};
use soundscape::synth;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let (pcm, labels) = synth::timbre_corpus(5, 10, 0.5, 8_000)?;
    let wav = dir.path().join("timbres.wav");
    audio::write_wav(&wav, &pcm)?;
    let panorama = dir.path().join("sky.png");
    fs::write(&panorama, b"placeholder")?;

    let cfg = PipelineConfig {
        inputs: vec![wav],
        segment_duration_s: 0.5,
        tsne: TsneGrid {
            perplexities: vec![5.0, 10.0],
            n_iter: 500,
            seed: 1,
            ..TsneGrid::default()
        },
        panorama: Some(panorama),
        output_dir: dir.path().join("bundle"),
        ..PipelineConfig::default()
    };
    let outcome = pipeline::run(&cfg)?;
    let purity = synth::purity(&outcome.clusters.assignment.labels, &labels);
    println!(
        "{} points, KL {:.4} ({:?}), {} clusters, purity {:.2}",
        outcome.scene.points.len(),
        outcome.embedding.final_kl,
        outcome.embedding.converged_gate,
        outcome.clusters.assignment.n_clusters,
        purity
    );
    for (name, hash) in &outcome.manifest.artifacts {
        println!("  {name:<14} {}", &hash[..16]);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
