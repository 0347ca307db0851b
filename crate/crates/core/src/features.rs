//! MFCC feature extraction.
//!
//! Each segment becomes a 39×F matrix (13 MFCCs, their deltas and
//! delta-deltas), which is reduced over frames to (mean, std, min, max)
//! per coefficient and flattened into a 156-long row. Row `i` of the
//! resulting [`FeatureTable`] describes segment `i`.
//!
//! Per frame the MFCC pipeline is: periodic Hann window, zero-pad to
//! `n_fft`, power spectrum `|X_k|^2` for `k = 0..=n_fft/2`, triangular
//! filters on the HTK mel scale (unit peak, evaluated at the exact bin
//! frequencies), natural log with an energy floor, orthonormal DCT-II.
//! Frames are not centred: `F = 1 + (len - frame_len) / hop`.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{PcmBuffer, SegmentSet};

pub const N_COEFFS: usize = 13;
pub const N_ROWS: usize = 3 * N_COEFFS;
pub const STATS: [&str; 4] = ["mean", "std", "min", "max"];
pub const TABLE_WIDTH: usize = N_ROWS * STATS.len();

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("invalid MFCC configuration: {0}")]
    InvalidConfig(String),
    #[error("segment has {len} samples, fewer than one frame of {frame_len}")]
    SegmentTooShort { len: usize, frame_len: usize },
    #[error("delta window of half-width {width} needs at least {needed} frames, got {frames}")]
    TooFewFrames { frames: usize, width: usize, needed: usize },
    #[error("segment sample rate {found} Hz does not match configuration ({expected} Hz)")]
    SampleRateMismatch { expected: u32, found: u32 },
    #[error("feature table needs at least {needed} rows, got {rows}")]
    TooFewRows { rows: usize, needed: usize },
    #[error("row {0} has zero norm")]
    ZeroNormRow(usize),
    #[error("malformed feature table: {0}")]
    Malformed(String),
    #[error("feature CSV error: {0}")]
    Csv(#[from] csv::Error),
}

/// Framing, filterbank and delta parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfccConfig {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
    pub n_fft: usize,
    pub n_mels: usize,
    pub n_coeffs: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
    pub delta_width: usize,
}

impl MfccConfig {
    /// 25 ms frames, 10 ms hop, 40 mel bands over `0..sr/2`.
    pub fn for_sample_rate(sample_rate: u32) -> Self {
        let sr = sample_rate as f64;
        let frame_len = ((0.025 * sr).round() as usize).max(1);
        let hop = ((0.010 * sr).round() as usize).max(1);
        Self {
            sample_rate,
            frame_len,
            hop,
            n_fft: frame_len.next_power_of_two(),
            n_mels: 40,
            n_coeffs: N_COEFFS,
            fmin: 0.0,
            fmax: sr / 2.0,
            log_floor: 1e-10,
            delta_width: 2,
        }
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        let bad = |msg: String| Err(FeatureError::InvalidConfig(msg));
        let nyquist = self.sample_rate as f64 / 2.0;
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive".into());
        }
        if self.frame_len == 0 || self.hop == 0 {
            return bad("frame_len and hop must be positive".into());
        }
        if !self.n_fft.is_power_of_two() || self.n_fft < self.frame_len {
            return bad(format!(
                "n_fft {} must be a power of two >= frame_len {}",
                self.n_fft, self.frame_len
            ));
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= nyquist) {
            return bad(format!(
                "need 0 <= fmin < fmax <= {nyquist}, got {}..{}",
                self.fmin, self.fmax
            ));
        }
        if self.n_coeffs != N_COEFFS {
            return bad(format!("n_coeffs must be {N_COEFFS}"));
        }
        if self.n_mels < self.n_coeffs {
            return bad(format!("n_mels {} < n_coeffs {}", self.n_mels, self.n_coeffs));
        }
        if !(self.log_floor > 0.0 && self.log_floor.is_finite()) {
            return bad("log_floor must be a small positive number".into());
        }
        if self.delta_width == 0 {
            return bad("delta_width must be at least 1".into());
        }
        Ok(())
    }

    /// Frames produced for a segment of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.frame_len {
            0
        } else {
            1 + (len - self.frame_len) / self.hop
        }
    }
}

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filter weights, `n_mels` rows of `n_fft/2 + 1` bins.
pub fn mel_filterbank(cfg: &MfccConfig) -> Vec<Vec<f64>> {
    let n_bins = cfg.n_fft / 2 + 1;
    let (mel_lo, mel_hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let bin_hz = cfg.sample_rate as f64 / cfg.n_fft as f64;
    edges
        .windows(3)
        .map(|e| {
            let (lo, centre, hi) = (e[0], e[1], e[2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    let rising = (f - lo) / (centre - lo);
                    let falling = (hi - f) / (hi - centre);
                    rising.min(falling).max(0.0)
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II basis, truncated to the first `n_out` outputs.
fn dct_matrix(n_in: usize, n_out: usize) -> Vec<Vec<f64>> {
    let m = n_in as f64;
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 { (1.0 / m).sqrt() } else { (2.0 / m).sqrt() };
            (0..n_in)
                .map(|n| scale * (PI * k as f64 * (2 * n + 1) as f64 / (2.0 * m)).cos())
                .collect()
        })
        .collect()
}

/// Periodic Hann window.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Precomputed state for repeated MFCC extraction with one configuration.
pub struct MfccExtractor {
    cfg: MfccConfig,
    window: Vec<f64>,
    filters: Vec<Vec<f64>>,
    dct: Vec<Vec<f64>>,
    fft: Arc<dyn Fft<f64>>,
}

impl MfccExtractor {
    pub fn new(cfg: &MfccConfig) -> Result<Self, FeatureError> {
        cfg.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.n_fft);
        Ok(Self {
            window: hann_window(cfg.frame_len),
            filters: mel_filterbank(cfg),
            dct: dct_matrix(cfg.n_mels, cfg.n_coeffs),
            fft,
            cfg: cfg.clone(),
        })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.cfg
    }

    /// 13×F matrix, one row per coefficient.
    pub fn mfcc(&self, segment: &PcmBuffer) -> Result<Vec<Vec<f64>>, FeatureError> {
        let cfg = &self.cfg;
        if segment.sample_rate != cfg.sample_rate {
            return Err(FeatureError::SampleRateMismatch {
                expected: cfg.sample_rate,
                found: segment.sample_rate,
            });
        }
        let frames = cfg.frame_count(segment.len());
        if frames == 0 {
            return Err(FeatureError::SegmentTooShort {
                len: segment.len(),
                frame_len: cfg.frame_len,
            });
        }
        let n_bins = cfg.n_fft / 2 + 1;
        let mut out = vec![Vec::with_capacity(frames); cfg.n_coeffs];
        let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut power = vec![0.0; n_bins];
        let mut log_mel = vec![0.0; cfg.n_mels];

        for t in 0..frames {
            let start = t * cfg.hop;
            let frame = &segment.samples[start..start + cfg.frame_len];
            buf.fill(Complex::new(0.0, 0.0));
            for ((slot, &s), w) in buf.iter_mut().zip(frame).zip(&self.window) {
                slot.re = s as f64 * w;
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (p, x) in power.iter_mut().zip(&buf) {
                *p = x.norm_sqr();
            }
            for (lm, filter) in log_mel.iter_mut().zip(&self.filters) {
                let energy: f64 = filter.iter().zip(&power).map(|(w, p)| w * p).sum();
                *lm = energy.max(cfg.log_floor).ln();
            }
            for (row, basis) in out.iter_mut().zip(&self.dct) {
                row.push(basis.iter().zip(&log_mel).map(|(b, x)| b * x).sum());
            }
        }
        Ok(out)
    }

    pub fn feature_stack(&self, segment: &PcmBuffer) -> Result<SegmentFeatures, FeatureError> {
        let mfcc = self.mfcc(segment)?;
        let d1 = deltas(&mfcc, self.cfg.delta_width)?;
        let d2 = deltas(&d1, self.cfg.delta_width)?;
        let frames = mfcc[0].len();
        let mut rows = mfcc;
        rows.extend(d1);
        rows.extend(d2);
        Ok(SegmentFeatures { rows, frames })
    }
}

/// Convenience wrapper building a one-off [`MfccExtractor`].
pub fn mfcc(segment: &PcmBuffer, cfg: &MfccConfig) -> Result<Vec<Vec<f64>>, FeatureError> {
    MfccExtractor::new(cfg)?.mfcc(segment)
}

pub fn feature_stack(segment: &PcmBuffer, cfg: &MfccConfig) -> Result<SegmentFeatures, FeatureError> {
    MfccExtractor::new(cfg)?.feature_stack(segment)
}

/// Regression deltas over a window of half-width `width`, replicating
/// the first and last frames at the edges.
pub fn deltas(coeffs: &[Vec<f64>], width: usize) -> Result<Vec<Vec<f64>>, FeatureError> {
    let frames = coeffs.first().map_or(0, Vec::len);
    let needed = 2 * width + 1;
    if width == 0 || frames < needed {
        return Err(FeatureError::TooFewFrames { frames, width, needed });
    }
    let denom = 2.0 * (1..=width).map(|w| (w * w) as f64).sum::<f64>();
    let last = frames - 1;
    Ok(coeffs
        .iter()
        .map(|row| {
            (0..frames)
                .map(|t| {
                    (1..=width)
                        .map(|w| {
                            let ahead = row[(t + w).min(last)];
                            let behind = row[t.saturating_sub(w)];
                            w as f64 * (ahead - behind)
                        })
                        .sum::<f64>()
                        / denom
                })
                .collect()
        })
        .collect())
}

/// 39×F stack: rows 0–12 MFCC, 13–25 delta, 26–38 delta-delta.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentFeatures {
    pub rows: Vec<Vec<f64>>,
    pub frames: usize,
}

impl SegmentFeatures {
    /// Per-row (mean, population std, min, max), flattened so that
    /// position `4*i + k` holds statistic `k` of row `i`.
    pub fn aggregate_and_flatten(&self) -> Vec<f64> {
        aggregate_and_flatten(&self.rows)
    }
}

pub fn aggregate_and_flatten(rows: &[Vec<f64>]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len() * STATS.len());
    for row in rows {
        let n = row.len() as f64;
        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // Rounding can leave the mean a hair outside [min, max] for constant rows.
        let mean = (row.iter().sum::<f64>() / n).clamp(min, max);
        let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        out.extend([mean, var.sqrt(), min, max]);
    }
    out
}

/// Column name for flattened position `4*coeff + stat`.
pub fn column_name(position: usize) -> String {
    format!("c{}_{}", position / STATS.len(), STATS[position % STATS.len()])
}

/// N×156 matrix fed to the embedding, one row per segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, FeatureError> {
        let width = rows.first().map_or(0, Vec::len);
        if width == 0 {
            return Err(FeatureError::Malformed("table has no columns".into()));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != width) {
            return Err(FeatureError::Malformed(format!("row {i} has a different width")));
        }
        if let Some(i) = rows.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(FeatureError::Malformed(format!("row {i} has non-finite values")));
        }
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Per-column z-scoring. Constant columns become zero.
    pub fn standardized(&self) -> Self {
        let n = self.len() as f64;
        let mut rows = self.rows.clone();
        for c in 0..self.width() {
            let mean = self.rows.iter().map(|r| r[c]).sum::<f64>() / n;
            let sd = (self.rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n).sqrt();
            for r in &mut rows {
                r[c] = if sd > 0.0 { (r[c] - mean) / sd } else { 0.0 };
            }
        }
        Self { rows }
    }

    /// CSV with a `c<i>_<stat>` header and full round-trip float precision.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), FeatureError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record((0..self.width()).map(column_name))?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, FeatureError> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        for (i, name) in header.iter().enumerate() {
            if name != column_name(i) {
                return Err(FeatureError::Malformed(format!(
                    "column {i} is named {name:?}, expected {:?}",
                    column_name(i)
                )));
            }
        }
        let mut rows = Vec::new();
        for (line, record) in r.records().enumerate() {
            let record = record?;
            let row = record
                .iter()
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| FeatureError::Malformed(format!("row {line}: {v:?}: {e}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Self::new(rows)
    }
}

/// Extracts one flattened row per segment, in segment order.
pub fn build_table(set: &SegmentSet, cfg: &MfccConfig) -> Result<FeatureTable, FeatureError> {
    if set.len() < 2 {
        return Err(FeatureError::TooFewRows {
            rows: set.len(),
            needed: 2,
        });
    }
    let extractor = MfccExtractor::new(cfg)?;
    let rows = set
        .segments
        .par_iter()
        .map(|seg| extractor.feature_stack(seg).map(|f| f.aggregate_and_flatten()))
        .collect::<Result<Vec<_>, _>>()?;
    FeatureTable::new(rows)
}

/// Largest cosine similarity between two distinct rows.
pub fn diversity_check(table: &FeatureTable) -> Result<f64, FeatureError> {
    if table.len() < 2 {
        return Err(FeatureError::TooFewRows {
            rows: table.len(),
            needed: 2,
        });
    }
    let norms: Vec<f64> = table
        .rows
        .iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if let Some(i) = norms.iter().position(|&n| n == 0.0) {
        return Err(FeatureError::ZeroNormRow(i));
    }
    let mut best = f64::NEG_INFINITY;
    for i in 0..table.len() {
        for j in i + 1..table.len() {
            let dot: f64 = table.rows[i].iter().zip(&table.rows[j]).map(|(a, b)| a * b).sum();
            best = best.max(dot / (norms[i] * norms[j]));
        }
    }
    Ok(best.clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> MfccConfig {
        MfccConfig::for_sample_rate(8000)
    }

    #[test]
    fn default_config_matches_standard_framing() {
        let c = MfccConfig::for_sample_rate(16000);
        assert_eq!((c.frame_len, c.hop, c.n_fft, c.n_mels), (400, 160, 512, 40));
        assert_eq!(c.frame_count(16000), 98);
        c.validate().unwrap();
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = cfg();
        c.n_fft = 100;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.fmax = 5000.0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.n_mels = 10;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.log_floor = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn silence_gives_constant_rows_and_zero_deltas() {
        let seg = PcmBuffer::new(vec![0.0; 8000], 8000).unwrap();
        let f = feature_stack(&seg, &cfg()).unwrap();
        assert_eq!(f.rows.len(), N_ROWS);
        for row in &f.rows[..N_COEFFS] {
            assert!(row.iter().all(|v| *v == row[0]));
        }
        for row in &f.rows[N_COEFFS..] {
            assert!(row.iter().all(|v| *v == 0.0));
        }
        // c0 of a floored frame is sqrt(n_mels) * ln(floor)
        let expected = (40f64).sqrt() * 1e-10f64.ln();
        assert!((f.rows[0][0] - expected).abs() < 1e-9);
    }

    #[test]
    fn too_short_segment_is_an_error() {
        let seg = PcmBuffer::new(vec![0.0; 10], 8000).unwrap();
        assert!(matches!(mfcc(&seg, &cfg()), Err(FeatureError::SegmentTooShort { .. })));
    }

    #[test]
    fn deltas_of_constant_are_exactly_zero() {
        let rows = vec![vec![3.25; 7]; 4];
        let d = deltas(&rows, 2).unwrap();
        assert!(d.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn deltas_recover_slope_of_linear_row() {
        let a = 0.75;
        let row: Vec<f64> = (0..12).map(|t| a * t as f64).collect();
        let d = deltas(&[row], 2).unwrap();
        for t in 2..10 {
            assert!((d[0][t] - a).abs() < 1e-12);
        }
    }

    #[test]
    fn deltas_need_enough_frames() {
        let rows = vec![vec![1.0; 4]];
        assert!(matches!(
            deltas(&rows, 2),
            Err(FeatureError::TooFewFrames {
                frames: 4,
                needed: 5,
                ..
            })
        ));
    }

    #[test]
    fn aggregation_of_constant_and_small_rows() {
        let out = aggregate_and_flatten(&[vec![2.5; 5], vec![1.0, 2.0, 3.0]]);
        assert_eq!(&out[..4], &[2.5, 0.0, 2.5, 2.5]);
        assert_eq!(out[4], 2.0);
        assert!((out[5] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((out[5] - 0.816_496_580_927_726).abs() < 1e-12);
        assert_eq!(&out[6..], &[1.0, 3.0]);
    }

    #[test]
    fn column_names_are_coefficient_major() {
        assert_eq!(column_name(0), "c0_mean");
        assert_eq!(column_name(5), "c1_std");
        assert_eq!(column_name(155), "c38_max");
    }

    #[test]
    fn diversity_basics() {
        let t = FeatureTable::new(vec![vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert!((diversity_check(&t).unwrap() - 1.0).abs() < 1e-12);
        let t = FeatureTable::new(vec![vec![1.0, 0.0], vec![0.0, 3.0]]).unwrap();
        assert_eq!(diversity_check(&t).unwrap(), 0.0);
        let t = FeatureTable::new(vec![vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(diversity_check(&t), Err(FeatureError::ZeroNormRow(1))));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let t = FeatureTable::new(vec![
            (0..TABLE_WIDTH).map(|i| i as f64 * 0.1 - 3.0).collect(),
            (0..TABLE_WIDTH).map(|i| (i as f64).sin() * 1e-7).collect(),
        ])
        .unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("c0_mean,c0_std,c0_min,c0_max,c1_mean"));
        assert_eq!(FeatureTable::read_csv(&buf[..]).unwrap(), t);
    }

    #[test]
    fn standardized_columns_have_zero_mean() {
        let t = FeatureTable::new(vec![vec![1.0, 5.0], vec![3.0, 5.0], vec![5.0, 5.0]]).unwrap();
        let z = t.standardized();
        let col0: Vec<f64> = z.rows.iter().map(|r| r[0]).collect();
        assert!((col0.iter().sum::<f64>()).abs() < 1e-12);
        assert!(z.rows.iter().all(|r| r[1] == 0.0));
    }
}
