// Write a synthetic recording to disk, read it back and cut it into
// one-second segments.

use std::error::Error;

use soundscape::audio;
use soundscape::synth;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let (pcm, _labels) = synth::timbre_corpus(1, 2, 1.0, 16_000)?;
    let wav = dir.path().join("recording.wav");
    audio::write_wav(&wav, &pcm)?;

    let loaded = audio::load_audio(&wav)?;
    let set = audio::segment(&loaded, 1.0, "recording")?;
    let files = audio::write_segments(&set, dir.path().join("audio"))?;
    println!(
        "{:.1} s at {} Hz -> {} segments of {} samples ({} dropped)",
        loaded.duration_s(),
        loaded.sample_rate,
        set.len(),
        set.segment_samples,
        set.dropped_samples
    );
    for f in &files {
        println!("  {:>2}  {}", f.index, f.path);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
