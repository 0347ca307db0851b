//! Brute-force reference implementations used as test oracles. They follow
//! the textbook definitions directly and share no code with the library.
#![allow(dead_code)]

use std::f64::consts::PI;

/// Power spectrum `|X_k|^2`, `k = 0..=n_fft/2`, by the direct O(n^2) DFT of
/// the zero-padded frame.
pub fn dft_power(frame: &[f64], n_fft: usize) -> Vec<f64> {
    let cos: Vec<f64> = (0..n_fft).map(|m| (2.0 * PI * m as f64 / n_fft as f64).cos()).collect();
    let sin: Vec<f64> = (0..n_fft).map(|m| (2.0 * PI * m as f64 / n_fft as f64).sin()).collect();
    (0..=n_fft / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, &x) in frame.iter().enumerate() {
                let m = (k * n) % n_fft;
                re += x * cos[m];
                im -= x * sin[m];
            }
            re * re + im * im
        })
        .collect()
}

pub struct MfccSpec {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
    pub n_fft: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub floor: f64,
}

impl MfccSpec {
    /// 25 ms / 10 ms framing, FFT size the next power of two, 40 bands.
    pub fn standard(sample_rate: u32) -> Self {
        let frame_len = (sample_rate as f64 * 0.025).round() as usize;
        let mut n_fft = 1;
        while n_fft < frame_len {
            n_fft *= 2;
        }
        Self {
            sample_rate,
            frame_len,
            hop: (sample_rate as f64 * 0.010).round() as usize,
            n_fft,
            n_mels: 40,
            fmin: 0.0,
            fmax: sample_rate as f64 / 2.0,
            floor: 1e-10,
        }
    }
}

fn mel(f: f64) -> f64 {
    1127.0 * (1.0 + f / 700.0).ln()
}

fn inv_mel(m: f64) -> f64 {
    700.0 * ((m / 1127.0).exp() - 1.0)
}

/// Weight of band `b` (0-based) at frequency `f` for unit-peak triangles
/// on equally spaced mel points.
fn triangle(spec: &MfccSpec, b: usize, f: f64) -> f64 {
    let step = (mel(spec.fmax) - mel(spec.fmin)) / (spec.n_mels + 1) as f64;
    let at = |i: usize| inv_mel(mel(spec.fmin) + i as f64 * step);
    let (lo, mid, hi) = (at(b), at(b + 1), at(b + 2));
    if f <= lo || f >= hi {
        0.0
    } else if f <= mid {
        (f - lo) / (mid - lo)
    } else {
        (hi - f) / (hi - mid)
    }
}

/// 13 x F MFCC matrix straight from the definition.
pub fn mfcc_oracle(samples: &[f32], spec: &MfccSpec) -> Vec<Vec<f64>> {
    let frames = if samples.len() < spec.frame_len {
        0
    } else {
        (samples.len() - spec.frame_len) / spec.hop + 1
    };
    let m = spec.n_mels as f64;
    let mut out = vec![Vec::new(); 13];
    for t in 0..frames {
        let frame: Vec<f64> = (0..spec.frame_len)
            .map(|n| {
                let w = 0.5 * (1.0 - (2.0 * PI * n as f64 / spec.frame_len as f64).cos());
                samples[t * spec.hop + n] as f64 * w
            })
            .collect();
        let power = dft_power(&frame, spec.n_fft);
        let log_e: Vec<f64> = (0..spec.n_mels)
            .map(|b| {
                let e: f64 = power
                    .iter()
                    .enumerate()
                    .map(|(k, p)| p * triangle(spec, b, k as f64 * spec.sample_rate as f64 / spec.n_fft as f64))
                    .sum();
                e.max(spec.floor).ln()
            })
            .collect();
        for (k, row) in out.iter_mut().enumerate() {
            let norm = if k == 0 { (1.0 / m).sqrt() } else { (2.0 / m).sqrt() };
            let c: f64 = log_e
                .iter()
                .enumerate()
                .map(|(b, x)| x * (PI / m * (b as f64 + 0.5) * k as f64).cos())
                .sum();
            row.push(norm * c);
        }
    }
    out
}

/// Regression deltas with edge frames repeated.
pub fn delta_oracle(x: &[Vec<f64>], width: usize) -> Vec<Vec<f64>> {
    let denom = 2.0 * (1..=width).map(|n| (n * n) as f64).sum::<f64>();
    x.iter()
        .map(|row| {
            let f = row.len() as isize;
            let at = |t: isize| row[t.clamp(0, f - 1) as usize];
            (0..f)
                .map(|t| {
                    (1..=width as isize)
                        .map(|n| n as f64 * (at(t + n) - at(t - n)))
                        .sum::<f64>()
                        / denom
                })
                .collect()
        })
        .collect()
}

pub fn euclid(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1])).sqrt()
}

/// DBSCAN by graph components: cores have at least `min_samples` points
/// (themselves included) within `eps`; clusters are connected components
/// of the core graph numbered by their lowest core index; a border point
/// takes the smallest cluster id among the cores that reach it.
pub fn dbscan_oracle(coords: &[[f64; 2]], eps: f64, min_samples: usize) -> (Vec<i64>, Vec<bool>) {
    let n = coords.len();
    let near = |i: usize, j: usize| euclid(coords[i], coords[j]) <= eps;
    let core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_samples)
        .collect();

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in 0..n {
            if core[i] && core[j] && near(i, j) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut root_id = std::collections::HashMap::new();
    let mut labels = vec![-1i64; n];
    for i in 0..n {
        if core[i] {
            let r = find(&mut parent, i);
            let next = root_id.len() as i64;
            labels[i] = *root_id.entry(r).or_insert(next);
        }
    }
    for i in 0..n {
        if !core[i] {
            labels[i] = (0..n)
                .filter(|&j| core[j] && near(i, j))
                .map(|j| labels[j])
                .min()
                .unwrap_or(-1);
        }
    }
    (labels, core)
}

/// Every noise point takes the label of its nearest core (lowest index on ties).
pub fn nearest_core_oracle(coords: &[[f64; 2]], labels: &[i64], core: &[bool]) -> Vec<usize> {
    (0..coords.len())
        .map(|i| {
            if labels[i] >= 0 {
                return labels[i] as usize;
            }
            let mut best: Option<(f64, usize)> = None;
            for j in (0..coords.len()).filter(|&j| core[j]) {
                let d = euclid(coords[i], coords[j]);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, j));
                }
            }
            labels[best.expect("at least one core").1] as usize
        })
        .collect()
}

/// `Σ_{i≠j} p_ij ln(p_ij / q_ij)` with `q` the normalised Student-t kernel.
pub fn kl_oracle(p: &[Vec<f64>], coords: &[[f64; 2]]) -> f64 {
    let n = coords.len();
    let kernel = |i: usize, j: usize| {
        let d = euclid(coords[i], coords[j]);
        1.0 / (1.0 + d * d)
    };
    let z: f64 = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|(i, j)| i != j)
        .map(|(i, j)| kernel(i, j))
        .sum();
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j && p[i][j] > 0.0 {
                kl += p[i][j] * (p[i][j] / (kernel(i, j) / z)).ln();
            }
        }
    }
    kl
}

/// `exp` of the natural-log entropy, which equals `2^H` with `H` in bits.
pub fn realized_perplexity(row: &[f64]) -> f64 {
    (-row.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()).exp()
}

/// Worst element-wise relative error, each difference scaled by
/// `max(|expected|, floor)`.
pub fn max_rel_err(actual: &[f64], expected: &[f64], floor: f64) -> f64 {
    assert_eq!(actual.len(), expected.len());
    actual
        .iter()
        .zip(expected)
        .map(|(a, e)| (a - e).abs() / e.abs().max(floor))
        .fold(0.0, f64::max)
}
