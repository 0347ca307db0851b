// MFCCs, deltas and the 156-value summary row for a single segment.

use std::error::Error;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use soundscape::audio::PcmBuffer;
use soundscape::features::{self, MfccConfig};
use soundscape::synth::{self, Timbre};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let sr = 16_000;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let segment = PcmBuffer::new(synth::render(Timbre::Chirp, sr as usize, sr, &mut rng), sr)?;

    let cfg = MfccConfig::for_sample_rate(sr);
    println!(
        "frame {} hop {} fft {} mels {} -> {} frames",
        cfg.frame_len,
        cfg.hop,
        cfg.n_fft,
        cfg.n_mels,
        cfg.frame_count(segment.len())
    );
    let stack = features::feature_stack(&segment, &cfg)?;
    println!("feature stack: {} x {}", stack.rows.len(), stack.frames);

    let row = stack.aggregate_and_flatten();
    for pos in [0, 1, 2, 3, 4, 155] {
        println!("  {:<12} {:>12.5}", features::column_name(pos), row[pos]);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
