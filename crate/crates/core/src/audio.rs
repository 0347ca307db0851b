//! WAV decoding, multi-track mixing and equal-length segmentation.
//!
//! Everything here works on mono `f32` buffers normalised to `[-1, 1]`.
//! Stereo input is downmixed by the per-sample mean on load.

use std::fs;
use std::path::{Path, PathBuf};

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// What happens to the trailing samples that do not fill a whole segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailPolicy {
    /// The remainder is discarded.
    #[default]
    Drop,
}

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("cannot read audio file {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("unsupported encoding in {path}: {detail}")]
    UnsupportedEncoding { path: PathBuf, detail: String },
    #[error("audio file {0} contains no samples")]
    Empty(PathBuf),
    #[error("cannot mix an empty list of tracks")]
    NoTracks,
    #[error("sample rate mismatch: expected {expected} Hz, found {found} Hz")]
    SampleRateMismatch { expected: u32, found: u32 },
    #[error("segment duration must be positive, got {0}")]
    InvalidDuration(f64),
    #[error("audio has {available} samples, shorter than one segment of {required}")]
    TooShort { available: usize, required: usize },
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error("failed to write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Mono PCM samples in `[-1, 1]` at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct PcmBuffer {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl PcmBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::ZeroSampleRate);
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// `N` equal-length segments cut from one source, in temporal order.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSet {
    pub segments: Vec<PcmBuffer>,
    pub segment_duration_s: f64,
    pub segment_samples: usize,
    pub source_id: String,
    pub sample_rate: u32,
    pub tail_policy: TailPolicy,
    /// Samples discarded at the end of the source.
    pub dropped_samples: usize,
}

impl SegmentSet {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

/// One row of the segment file manifest returned by [`write_segments`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentFile {
    pub index: usize,
    /// Path relative to the directory passed to [`write_segments`].
    pub path: String,
}

/// Reads a 16-bit PCM or 32-bit float WAV, mono or stereo.
pub fn load_audio(path: impl AsRef<Path>) -> Result<PcmBuffer, AudioError> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|source| AudioError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.channels > 2 {
        return Err(AudioError::UnsupportedEncoding {
            path: path.to_path_buf(),
            detail: format!("{} channels (only mono or stereo)", spec.channels),
        });
    }
    let read_err = |source| AudioError::Read {
        path: path.to_path_buf(),
        source,
    };
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(read_err)?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v.clamp(-1.0, 1.0)))
            .collect::<Result<_, _>>()
            .map_err(read_err)?,
        (format, bits) => {
            return Err(AudioError::UnsupportedEncoding {
                path: path.to_path_buf(),
                detail: format!("{bits}-bit {format:?}"),
            })
        }
    };
    if interleaved.is_empty() {
        return Err(AudioError::Empty(path.to_path_buf()));
    }
    if let Some(bad) = interleaved.iter().find(|s| !s.is_finite()) {
        return Err(AudioError::UnsupportedEncoding {
            path: path.to_path_buf(),
            detail: format!("non-finite sample {bad}"),
        });
    }

    let samples = if spec.channels == 2 {
        interleaved.chunks_exact(2).map(|lr| (lr[0] + lr[1]) * 0.5).collect()
    } else {
        interleaved
    };
    PcmBuffer::new(samples, spec.sample_rate)
}

/// Writes a mono 16-bit PCM WAV. Samples outside `[-1, 1]` are clipped.
pub fn write_wav(path: impl AsRef<Path>, pcm: &PcmBuffer) -> Result<(), AudioError> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: pcm.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let write_err = |source| AudioError::Write {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = WavWriter::create(path, spec).map_err(write_err)?;
    for &s in &pcm.samples {
        writer.write_sample(quantize_i16(s)).map_err(write_err)?;
    }
    writer.finalize().map_err(write_err)
}

fn quantize_i16(sample: f32) -> i16 {
    (sample.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Sums the tracks sample by sample (shorter ones are zero-padded) and
/// peak-normalises the result to 1.0. An all-zero mix is returned as is.
///
/// The output does not depend on the order of `buffers`.
pub fn mix_tracks(buffers: &[PcmBuffer]) -> Result<PcmBuffer, AudioError> {
    let first = buffers.first().ok_or(AudioError::NoTracks)?;
    let sample_rate = first.sample_rate;
    if let Some(other) = buffers.iter().find(|b| b.sample_rate != sample_rate) {
        return Err(AudioError::SampleRateMismatch {
            expected: sample_rate,
            found: other.sample_rate,
        });
    }
    let len = buffers.iter().map(PcmBuffer::len).max().unwrap_or(0);
    let mut column = Vec::with_capacity(buffers.len());
    let mut mixed = Vec::with_capacity(len);
    for i in 0..len {
        column.clear();
        column.extend(buffers.iter().map(|b| b.samples.get(i).map_or(0.0, |&s| s as f64)));
        // Sorting makes the floating-point sum independent of track order.
        column.sort_by(f64::total_cmp);
        mixed.push(column.iter().sum::<f64>());
    }
    let peak = mixed.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let samples = if peak > 0.0 {
        mixed.iter().map(|s| (s / peak) as f32).collect()
    } else {
        mixed.iter().map(|&s| s as f32).collect()
    };
    PcmBuffer::new(samples, sample_rate)
}

/// Number of samples in one segment of `duration_s` seconds.
pub fn segment_samples(duration_s: f64, sample_rate: u32) -> usize {
    (duration_s * sample_rate as f64).round() as usize
}

/// Cuts `pcm` into contiguous, non-overlapping segments of `duration_s`.
/// The trailing remainder is dropped.
pub fn segment(pcm: &PcmBuffer, duration_s: f64, source_id: impl Into<String>) -> Result<SegmentSet, AudioError> {
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(AudioError::InvalidDuration(duration_s));
    }
    let seg_len = segment_samples(duration_s, pcm.sample_rate);
    if seg_len == 0 {
        return Err(AudioError::InvalidDuration(duration_s));
    }
    if pcm.len() < seg_len {
        return Err(AudioError::TooShort {
            available: pcm.len(),
            required: seg_len,
        });
    }
    let segments: Vec<PcmBuffer> = pcm
        .samples
        .chunks_exact(seg_len)
        .map(|chunk| PcmBuffer {
            samples: chunk.to_vec(),
            sample_rate: pcm.sample_rate,
        })
        .collect();
    let dropped_samples = pcm.len() - segments.len() * seg_len;
    Ok(SegmentSet {
        segments,
        segment_duration_s: duration_s,
        segment_samples: seg_len,
        source_id: source_id.into(),
        sample_rate: pcm.sample_rate,
        tail_policy: TailPolicy::Drop,
        dropped_samples,
    })
}

/// File name used for segment `index` of `source_id`.
pub fn segment_file_name(source_id: &str, index: usize) -> String {
    format!("{source_id}_{index:04}.wav")
}

/// Writes one WAV per segment into `dir` (created if missing).
pub fn write_segments(set: &SegmentSet, dir: impl AsRef<Path>) -> Result<Vec<SegmentFile>, AudioError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| AudioError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    set.segments
        .iter()
        .enumerate()
        .map(|(index, seg)| {
            let name = segment_file_name(&set.source_id, index);
            write_wav(dir.join(&name), seg)?;
            Ok(SegmentFile { index, path: name })
        })
        .collect()
}
