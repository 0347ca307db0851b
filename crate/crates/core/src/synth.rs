//! Synthetic test signals with known timbre labels.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{AudioError, PcmBuffer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timbre {
    /// 220 Hz sine with random phase and level plus faint white noise.
    Sine,
    /// Sum of 50 random-phase partials spread over 2-4 kHz.
    BandNoise,
    /// Linear sweep from about 300 Hz to about 3 kHz.
    Chirp,
}

impl Timbre {
    pub const ALL: [Timbre; 3] = [Timbre::Sine, Timbre::BandNoise, Timbre::Chirp];
}

/// One segment of `timbre`, `n` samples long.
pub fn render(timbre: Timbre, n: usize, sample_rate: u32, rng: &mut impl Rng) -> Vec<f32> {
    let sr = sample_rate as f64;
    match timbre {
        Timbre::Sine => {
            let phase = rng.random::<f64>() * TAU;
            let amp = 0.3 + 0.4 * rng.random::<f64>();
            (0..n)
                .map(|i| {
                    let t = i as f64 / sr;
                    let hiss = 0.01 * (rng.random::<f64>() - 0.5);
                    (amp * (TAU * 220.0 * t + phase).sin() + hiss) as f32
                })
                .collect()
        }
        Timbre::BandNoise => {
            let partials: Vec<(f64, f64)> = (0..50)
                .map(|_| (2000.0 + 2000.0 * rng.random::<f64>(), rng.random::<f64>() * TAU))
                .collect();
            (0..n)
                .map(|i| {
                    let t = i as f64 / sr;
                    let s: f64 = partials.iter().map(|(f, p)| (TAU * f * t + p).sin()).sum();
                    (0.02 * s) as f32
                })
                .collect()
        }
        Timbre::Chirp => {
            let f0 = 300.0 + 50.0 * rng.random::<f64>();
            let f1 = 3000.0 + 200.0 * rng.random::<f64>();
            let dur = n as f64 / sr;
            (0..n)
                .map(|i| {
                    let t = i as f64 / sr;
                    (0.5 * (TAU * (f0 * t + 0.5 * (f1 - f0) / dur * t * t)).sin()) as f32
                })
                .collect()
        }
    }
}

/// `per_class` segments of each timbre, grouped by timbre, concatenated into
/// one buffer. Returns the buffer and the label of every segment.
pub fn timbre_corpus(
    seed: u64,
    per_class: usize,
    segment_s: f64,
    sample_rate: u32,
) -> Result<(PcmBuffer, Vec<Timbre>), AudioError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (segment_s * sample_rate as f64).round() as usize;
    let mut samples = Vec::with_capacity(3 * per_class * n);
    let mut labels = Vec::with_capacity(3 * per_class);
    for timbre in Timbre::ALL {
        for _ in 0..per_class {
            samples.extend(render(timbre, n, sample_rate, &mut rng));
            labels.push(timbre);
        }
    }
    Ok((PcmBuffer::new(samples, sample_rate)?, labels))
}

/// Fraction of items whose cluster's majority label equals their own label.
pub fn purity<L: Eq + std::hash::Hash + Copy>(clusters: &[usize], labels: &[L]) -> f64 {
    use std::collections::HashMap;
    assert_eq!(clusters.len(), labels.len());
    if clusters.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<usize, HashMap<L, usize>> = HashMap::new();
    for (&c, &l) in clusters.iter().zip(labels) {
        *counts.entry(c).or_default().entry(l).or_default() += 1;
    }
    let majority: usize = counts.values().map(|m| m.values().max().copied().unwrap_or(0)).sum();
    majority as f64 / clusters.len() as f64
}
