//! End-to-end orchestration and the on-disk artifacts of each stage.
//!
//! A run writes everything into one bundle directory:
//!
//! ```text
//! audio/<source>_NNNN.wav   segments.json
//! features.csv  features.json
//! embedding.json  clusters.json
//! scene.json  panorama.<ext>
//! run_manifest.json
//! ```
//!
//! Each stage reads the previous stage's artifact from disk, so running the
//! stages one by one gives the same bytes as [`run`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::audio::{self, AudioError, PcmBuffer, SegmentFile, SegmentSet, TailPolicy};
use crate::clustering::{self, ClusterAssignment, ClusterError};
use crate::embedding::{self, EmbeddingError, GateTier, RunSummary, TsneParams};
use crate::features::{self, FeatureError, FeatureTable, MfccConfig};
use crate::scene::{self, Colors, SceneConfig, SceneError, SceneManifest, Violation};
use crate::spatial::{self, SpatialError, VerticalFit};
use crate::trajectory::{self, TrajectoryError, TrajectoryStats};

pub const ARTIFACT_VERSION: &str = "1.0";
pub const DIVERSITY_THRESHOLD: f64 = 0.9;

pub const SEGMENTS_FILE: &str = "segments.json";
pub const FEATURES_CSV: &str = "features.csv";
pub const FEATURES_JSON: &str = "features.json";
pub const EMBEDDING_FILE: &str = "embedding.json";
pub const CLUSTERS_FILE: &str = "clusters.json";
pub const SCENE_FILE: &str = "scene.json";
pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";
pub const AUDIO_DIR: &str = "audio";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("segment stage: {0}")]
    Audio(#[from] AudioError),
    #[error("features stage: {0}")]
    Features(#[from] FeatureError),
    #[error("embed stage: {0}")]
    Embedding(#[from] EmbeddingError),
    #[error("cluster stage: {0}")]
    Cluster(#[from] ClusterError),
    #[error("scene stage: {0}")]
    Spatial(#[from] SpatialError),
    #[error("scene stage: {0}")]
    Scene(#[from] SceneError),
    #[error("analyze stage: {0}")]
    Trajectory(#[from] TrajectoryError),
    #[error("embedding quality gate failed: final KL {final_kl:.4} is {tier:?} under policy {policy:?}")]
    Gate {
        final_kl: f64,
        tier: GateTier,
        policy: GatePolicy,
    },
    #[error("scene validation failed with {} violation(s): {}", .0.len(), join_violations(.0))]
    Validation(Vec<Violation>),
    #[error("panorama image {0} does not exist")]
    MissingPanorama(PathBuf),
    #[error("{artifact} has version {found:?}, expected {ARTIFACT_VERSION:?}")]
    Version { artifact: PathBuf, found: String },
    #[error("cannot read artifact {path}: {detail}")]
    Artifact { path: PathBuf, detail: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl PipelineError {
    /// Process exit code: 2 gate failure, 3 validation failure, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Gate { .. } => 2,
            PipelineError::Validation(_) => 3,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// How the best embedding's KL tier is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GatePolicy {
    /// Require `KL < 0.5`.
    Strict,
    /// Require `KL < 1.0`; warn when it is not below 0.5.
    #[default]
    Loose,
    /// Never fail; the tier is still recorded.
    AllowFailed,
}

impl GatePolicy {
    pub fn admits(self, tier: GateTier) -> bool {
        match self {
            GatePolicy::Strict => tier == GateTier::Strict,
            GatePolicy::Loose => tier != GateTier::Failed,
            GatePolicy::AllowFailed => true,
        }
    }
}

/// Optional overrides on top of [`MfccConfig::for_sample_rate`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MfccOverrides {
    pub frame_ms: Option<f64>,
    pub hop_ms: Option<f64>,
    pub n_fft: Option<usize>,
    pub n_mels: Option<usize>,
    pub fmin: Option<f64>,
    pub fmax: Option<f64>,
    pub log_floor: Option<f64>,
    pub delta_width: Option<usize>,
}

impl MfccOverrides {
    pub fn resolve(&self, sample_rate: u32) -> Result<MfccConfig, PipelineError> {
        let mut cfg = MfccConfig::for_sample_rate(sample_rate);
        let sr = sample_rate as f64;
        if let Some(ms) = self.frame_ms {
            cfg.frame_len = (ms / 1000.0 * sr).round() as usize;
            cfg.n_fft = cfg.frame_len.next_power_of_two();
        }
        if let Some(ms) = self.hop_ms {
            cfg.hop = (ms / 1000.0 * sr).round() as usize;
        }
        if let Some(v) = self.n_fft {
            cfg.n_fft = v;
        }
        if let Some(v) = self.n_mels {
            cfg.n_mels = v;
        }
        if let Some(v) = self.fmin {
            cfg.fmin = v;
        }
        if let Some(v) = self.fmax {
            cfg.fmax = v;
        }
        if let Some(v) = self.log_floor {
            cfg.log_floor = v;
        }
        if let Some(v) = self.delta_width {
            cfg.delta_width = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneGrid {
    pub perplexities: Vec<f64>,
    pub learning_rates: Vec<f64>,
    pub runs_per_cell: usize,
    pub seed: u64,
    pub n_iter: usize,
    pub early_exaggeration_factor: f64,
    pub init_scale: f64,
}

impl Default for TsneGrid {
    fn default() -> Self {
        let base = TsneParams::default();
        Self {
            perplexities: vec![5.0, 10.0, 15.0, 30.0],
            learning_rates: vec![base.learning_rate],
            runs_per_cell: 1,
            seed: 0,
            n_iter: base.n_iter,
            early_exaggeration_factor: base.early_exaggeration_factor,
            init_scale: base.init_scale,
        }
    }
}

impl TsneGrid {
    /// Cells in perplexity-major order. Perplexities not below `n` are
    /// skipped with a warning.
    pub fn cells(&self, n: usize) -> Result<Vec<TsneParams>, PipelineError> {
        let mut cells = Vec::new();
        for &perplexity in &self.perplexities {
            if perplexity >= n as f64 {
                warn!("skipping perplexity {perplexity}: only {n} segments");
                continue;
            }
            for &learning_rate in &self.learning_rates {
                cells.push(TsneParams {
                    perplexity,
                    learning_rate,
                    n_iter: self.n_iter,
                    early_exaggeration_factor: self.early_exaggeration_factor,
                    seed: self.seed,
                    init_scale: self.init_scale,
                    ..TsneParams::default()
                });
            }
        }
        if cells.is_empty() {
            return Err(PipelineError::Config(format!(
                "no t-SNE grid cell has perplexity below the segment count {n}"
            )));
        }
        Ok(cells)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpsConfig {
    /// Explicit sweep values; derived from the embedding when absent.
    pub values: Option<Vec<f64>>,
    pub steps: usize,
    pub min_samples: usize,
}

impl Default for EpsConfig {
    fn default() -> Self {
        Self {
            values: None,
            steps: clustering::DEFAULT_SWEEP_STEPS,
            min_samples: clustering::DEFAULT_MIN_SAMPLES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub inputs: Vec<PathBuf>,
    pub mix: bool,
    /// Defaults to the first input's file stem.
    pub source_id: Option<String>,
    pub segment_duration_s: f64,
    pub mfcc: MfccOverrides,
    /// Z-score feature columns before embedding.
    pub standardize: bool,
    pub tsne: TsneGrid,
    pub gate_policy: GatePolicy,
    pub eps: EpsConfig,
    /// JSON object mapping cluster id to display name.
    pub cluster_names: Option<PathBuf>,
    pub radius: f64,
    pub vertical_fit: Option<VerticalFit>,
    pub panorama: Option<PathBuf>,
    pub colors: Colors,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            mix: false,
            source_id: None,
            segment_duration_s: 10.0,
            mfcc: MfccOverrides::default(),
            standardize: false,
            tsne: TsneGrid::default(),
            gate_policy: GatePolicy::Loose,
            eps: EpsConfig::default(),
            cluster_names: None,
            radius: spatial::DEFAULT_RADIUS,
            vertical_fit: None,
            panorama: None,
            colors: Colors::default(),
            output_dir: PathBuf::from("soundscape-out"),
        }
    }
}

impl PipelineConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    pub fn source_id(&self) -> String {
        self.source_id.clone().unwrap_or_else(|| {
            self.inputs
                .first()
                .and_then(|p| p.file_stem())
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "source".to_string())
        })
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| PipelineError::Artifact {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

#[derive(Deserialize)]
struct VersionProbe {
    version: Option<String>,
}

/// Reads a stage artifact after checking its `version` field.
pub fn read_artifact<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T, PipelineError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let bad = |e: serde_json::Error| PipelineError::Artifact {
        path: path.to_path_buf(),
        detail: e.to_string(),
    };
    let probe: VersionProbe = serde_json::from_str(&text).map_err(bad)?;
    let found = probe.version.unwrap_or_default();
    if found != ARTIFACT_VERSION {
        return Err(PipelineError::Version {
            artifact: path.to_path_buf(),
            found,
        });
    }
    serde_json::from_str(&text).map_err(bad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentsArtifact {
    pub version: String,
    pub source_id: String,
    pub sample_rate: u32,
    pub segment_duration_s: f64,
    pub segment_samples: usize,
    pub dropped_samples: usize,
    pub tail_policy: TailPolicy,
    pub mixed: bool,
    /// Paths relative to the directory holding `segments.json`.
    pub files: Vec<SegmentFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturesArtifact {
    pub version: String,
    pub mfcc: MfccConfig,
    pub standardized: bool,
    /// Maximum pairwise cosine similarity between rows.
    pub max_cosine_similarity: f64,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingArtifact {
    pub version: String,
    pub coords: Vec<[f64; 2]>,
    pub final_kl: f64,
    pub params: TsneParams,
    pub converged_gate: GateTier,
    pub kl_after_exaggeration: f64,
    pub gate_policy: GatePolicy,
    pub runs: Vec<RunSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClustersArtifact {
    pub version: String,
    #[serde(flatten)]
    pub assignment: ClusterAssignment,
    /// `(eps, n_clusters, noise)` for every sweep value.
    pub sweep: Vec<(f64, usize, usize)>,
}

/// Loads the inputs, mixes them if asked, cuts segments and writes
/// `audio/*.wav` plus `segments.json` into the output directory.
pub fn stage_segment(cfg: &PipelineConfig) -> Result<SegmentsArtifact, PipelineError> {
    if cfg.inputs.is_empty() {
        return Err(PipelineError::Config("no input audio given".into()));
    }
    if cfg.inputs.len() > 1 && !cfg.mix {
        return Err(PipelineError::Config(
            "several inputs given; enable mixing to combine them".into(),
        ));
    }
    let tracks = cfg
        .inputs
        .iter()
        .map(audio::load_audio)
        .collect::<Result<Vec<_>, _>>()?;
    let pcm = if cfg.mix {
        audio::mix_tracks(&tracks)?
    } else {
        tracks.into_iter().next().expect("one input")
    };
    let source_id = cfg.source_id();
    let set = audio::segment(&pcm, cfg.segment_duration_s, &source_id)?;
    if set.dropped_samples > 0 {
        info!("dropped {} trailing samples", set.dropped_samples);
    }

    let out = &cfg.output_dir;
    let files = audio::write_segments(&set, out.join(AUDIO_DIR))?
        .into_iter()
        .map(|f| SegmentFile {
            index: f.index,
            path: format!("{AUDIO_DIR}/{}", f.path),
        })
        .collect();
    let artifact = SegmentsArtifact {
        version: ARTIFACT_VERSION.into(),
        source_id,
        sample_rate: set.sample_rate,
        segment_duration_s: set.segment_duration_s,
        segment_samples: set.segment_samples,
        dropped_samples: set.dropped_samples,
        tail_policy: set.tail_policy,
        mixed: cfg.mix,
        files,
    };
    write_json(&out.join(SEGMENTS_FILE), &artifact)?;
    Ok(artifact)
}

/// Reloads the segment WAVs listed in a `segments.json`.
pub fn load_segments(segments_json: &Path) -> Result<(SegmentsArtifact, SegmentSet), PipelineError> {
    let artifact: SegmentsArtifact = read_artifact(segments_json)?;
    let base = segments_json.parent().unwrap_or_else(|| Path::new("."));
    let mut files = artifact.files.clone();
    files.sort_by_key(|f| f.index);
    let segments = files
        .iter()
        .map(|f| audio::load_audio(base.join(&f.path)))
        .collect::<Result<Vec<PcmBuffer>, _>>()?;
    if let Some(bad) = segments.iter().find(|s| s.len() != artifact.segment_samples) {
        return Err(PipelineError::Artifact {
            path: segments_json.to_path_buf(),
            detail: format!(
                "segment has {} samples, manifest says {}",
                bad.len(),
                artifact.segment_samples
            ),
        });
    }
    let set = SegmentSet {
        segments,
        segment_duration_s: artifact.segment_duration_s,
        segment_samples: artifact.segment_samples,
        source_id: artifact.source_id.clone(),
        sample_rate: artifact.sample_rate,
        tail_policy: artifact.tail_policy,
        dropped_samples: artifact.dropped_samples,
    };
    Ok((artifact, set))
}

/// Builds the feature table from `segments.json` and writes `features.csv`
/// and `features.json`. Warns when the diversity gate is exceeded.
pub fn stage_features(segments_json: &Path, cfg: &PipelineConfig) -> Result<FeatureTable, PipelineError> {
    let (artifact, set) = load_segments(segments_json)?;
    let mfcc = cfg.mfcc.resolve(artifact.sample_rate)?;
    let mut table = features::build_table(&set, &mfcc)?;
    if cfg.standardize {
        table = table.standardized();
    }
    let max_cos = features::diversity_check(&table)?;
    if max_cos > DIVERSITY_THRESHOLD {
        warn!("max pairwise cosine similarity {max_cos:.4} exceeds {DIVERSITY_THRESHOLD}");
    }

    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let csv_path = out.join(FEATURES_CSV);
    let file = fs::File::create(&csv_path).map_err(io_err(&csv_path))?;
    table.write_csv(file)?;
    write_json(
        &out.join(FEATURES_JSON),
        &FeaturesArtifact {
            version: ARTIFACT_VERSION.into(),
            mfcc,
            standardized: cfg.standardize,
            max_cosine_similarity: max_cos,
            rows: table.rows.clone(),
        },
    )?;
    Ok(table)
}

/// Accepts either `features.csv` or a versioned `features.json`.
pub fn load_features(path: &Path) -> Result<FeatureTable, PipelineError> {
    if path.extension().is_some_and(|e| e == "json") {
        let artifact: FeaturesArtifact = read_artifact(path)?;
        Ok(FeatureTable::new(artifact.rows)?)
    } else {
        let file = fs::File::open(path).map_err(io_err(path))?;
        Ok(FeatureTable::read_csv(file)?)
    }
}

/// Grid-searches t-SNE, writes `embedding.json` and then enforces the gate
/// policy (the artifact is written even when the gate fails).
pub fn stage_embed(table: &FeatureTable, cfg: &PipelineConfig) -> Result<EmbeddingArtifact, PipelineError> {
    let cells = cfg.tsne.cells(table.len())?;
    let search = embedding::grid_search(table, &cells, cfg.tsne.runs_per_cell)?;
    for (perp, misses) in &search.calibration_misses {
        warn!("perplexity {perp}: {misses} rows missed the calibration tolerance");
    }
    let best = search.best;
    let artifact = EmbeddingArtifact {
        version: ARTIFACT_VERSION.into(),
        coords: best.coords,
        final_kl: best.final_kl,
        params: best.params,
        converged_gate: best.converged_gate,
        kl_after_exaggeration: best.kl_after_exaggeration,
        gate_policy: cfg.gate_policy,
        runs: search.runs,
    };
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(io_err(out))?;
    write_json(&out.join(EMBEDDING_FILE), &artifact)?;

    let tier = artifact.converged_gate;
    if !cfg.gate_policy.admits(tier) {
        return Err(PipelineError::Gate {
            final_kl: artifact.final_kl,
            tier,
            policy: cfg.gate_policy,
        });
    }
    if tier != GateTier::Strict {
        warn!("final KL {:.4} is above the 0.5 target", artifact.final_kl);
    }
    Ok(artifact)
}

fn load_names(path: &Path) -> Result<BTreeMap<usize, String>, PipelineError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Artifact {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

/// DBSCAN eps sweep, noise reassignment, optional names; writes `clusters.json`.
pub fn stage_cluster(emb: &EmbeddingArtifact, cfg: &PipelineConfig) -> Result<ClustersArtifact, PipelineError> {
    let eps_values = match &cfg.eps.values {
        Some(v) => v.clone(),
        None => clustering::default_eps_values(&emb.coords, cfg.eps.steps)?,
    };
    let sweep = clustering::eps_sweep(&emb.coords, &eps_values, cfg.eps.min_samples)?;
    if sweep.all_noise {
        warn!("no eps value produced a cluster");
    }
    let mut assignment = clustering::assign_noise(&sweep.chosen, &emb.coords)?;
    if let Some(path) = &cfg.cluster_names {
        assignment = assignment.with_names(load_names(path)?);
    }
    let artifact = ClustersArtifact {
        version: ARTIFACT_VERSION.into(),
        assignment,
        sweep: sweep.trials,
    };
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(io_err(out))?;
    write_json(&out.join(CLUSTERS_FILE), &artifact)?;
    Ok(artifact)
}

/// Maps the embedding onto the cylinder, copies the panorama into the
/// bundle and writes a validated `scene.json` next to `segments.json`.
pub fn stage_scene(
    emb: &EmbeddingArtifact,
    clusters: &ClustersArtifact,
    segments: &SegmentsArtifact,
    bundle_dir: &Path,
    cfg: &PipelineConfig,
) -> Result<SceneManifest, PipelineError> {
    let panorama = cfg
        .panorama
        .as_ref()
        .ok_or_else(|| PipelineError::Config("a panorama image path is required".into()))?;
    if !panorama.is_file() {
        return Err(PipelineError::MissingPanorama(panorama.clone()));
    }
    let ext = panorama
        .extension()
        .map(|e| e.to_string_lossy().into_owned())
        .unwrap_or_else(|| "img".into());
    let panorama_name = format!("panorama.{ext}");
    let target = bundle_dir.join(&panorama_name);
    let same = fs::canonicalize(panorama).ok() == fs::canonicalize(&target).ok();
    if !same {
        fs::copy(panorama, &target).map_err(io_err(&target))?;
    }

    let points = spatial::cylindrical_map(&emb.coords, cfg.radius)?;
    let points = spatial::vertical_fit(&points, cfg.vertical_fit)?;
    let manifest = scene::assemble_scene(
        &points,
        &clusters.assignment,
        &segments.files,
        bundle_dir,
        &SceneConfig {
            source_id: segments.source_id.clone(),
            radius: cfg.radius,
            duration_s: segments.segment_duration_s,
            panorama: panorama_name,
            colors: cfg.colors.clone(),
        },
    )?;
    let path = bundle_dir.join(SCENE_FILE);
    scene::export_scene(&manifest, &path)?;
    let violations = scene::validate_scene(&path)?;
    if !violations.is_empty() {
        return Err(PipelineError::Validation(violations));
    }
    Ok(manifest)
}

/// Trajectory analytics for one log; writes the report into `out`.
pub fn stage_analyze(scene_path: &Path, trajectory_path: &Path, out: &Path) -> Result<TrajectoryStats, PipelineError> {
    let manifest = scene::load_scene(scene_path)?;
    let log = trajectory::parse_log(trajectory_path, &manifest)?;
    let stats = trajectory::compute_stats(&log, &manifest)?;
    trajectory::export_stats(&stats, out)?;
    Ok(stats)
}

pub fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateOutcome {
    pub policy: GatePolicy,
    pub tier: GateTier,
    pub final_kl: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: PipelineConfig,
    pub n_segments: usize,
    pub max_cosine_similarity: f64,
    pub diversity_warning: bool,
    pub gate: GateOutcome,
    /// Seed of the selected run (grid seed plus run index).
    pub selected_seed: u64,
    pub selected_perplexity: f64,
    pub selected_learning_rate: f64,
    pub n_clusters: Option<usize>,
    pub eps_used: Option<f64>,
    /// File name to SHA-256 of every artifact written.
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub bundle_dir: PathBuf,
    pub table: FeatureTable,
    pub embedding: EmbeddingArtifact,
    pub clusters: ClustersArtifact,
    pub scene: SceneManifest,
    pub manifest: RunManifest,
}

fn record_manifest(
    cfg: &PipelineConfig,
    table: &FeatureTable,
    max_cos: f64,
    emb: &EmbeddingArtifact,
    clusters: Option<&ClustersArtifact>,
) -> Result<RunManifest, PipelineError> {
    let out = &cfg.output_dir;
    let mut artifacts = BTreeMap::new();
    for name in [
        SEGMENTS_FILE,
        FEATURES_CSV,
        FEATURES_JSON,
        EMBEDDING_FILE,
        CLUSTERS_FILE,
        SCENE_FILE,
    ] {
        let path = out.join(name);
        if path.is_file() {
            artifacts.insert(name.to_string(), sha256_file(&path)?);
        }
    }
    let manifest = RunManifest {
        version: ARTIFACT_VERSION.into(),
        config: cfg.clone(),
        n_segments: table.len(),
        max_cosine_similarity: max_cos,
        diversity_warning: max_cos > DIVERSITY_THRESHOLD,
        gate: GateOutcome {
            policy: cfg.gate_policy,
            tier: emb.converged_gate,
            final_kl: emb.final_kl,
            passed: cfg.gate_policy.admits(emb.converged_gate),
        },
        selected_seed: emb.params.seed,
        selected_perplexity: emb.params.perplexity,
        selected_learning_rate: emb.params.learning_rate,
        n_clusters: clusters.map(|c| c.assignment.n_clusters),
        eps_used: clusters.map(|c| c.assignment.eps_used),
        artifacts,
    };
    write_json(&out.join(RUN_MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Full pipeline: segment, features, embed, cluster, scene. On a gate
/// failure the run manifest is still written before the error is returned.
pub fn run(cfg: &PipelineConfig) -> Result<RunOutcome, PipelineError> {
    if let Some(p) = &cfg.panorama {
        if !p.is_file() {
            return Err(PipelineError::MissingPanorama(p.clone()));
        }
    } else {
        return Err(PipelineError::Config("a panorama image path is required".into()));
    }
    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out).map_err(io_err(&out))?;

    let segments = stage_segment(cfg)?;
    let segments_path = out.join(SEGMENTS_FILE);
    let table = stage_features(&segments_path, cfg)?;
    let max_cos = features::diversity_check(&table)?;

    let embedding = match stage_embed(&load_features(&out.join(FEATURES_CSV))?, cfg) {
        Ok(e) => e,
        Err(err @ PipelineError::Gate { .. }) => {
            let emb: EmbeddingArtifact = read_artifact(out.join(EMBEDDING_FILE))?;
            record_manifest(cfg, &table, max_cos, &emb, None)?;
            return Err(err);
        }
        Err(e) => return Err(e),
    };
    let embedding: EmbeddingArtifact = {
        let reread: EmbeddingArtifact = read_artifact(out.join(EMBEDDING_FILE))?;
        debug_assert_eq!(reread, embedding);
        reread
    };
    let clusters = stage_cluster(&embedding, cfg)?;
    let scene = stage_scene(&embedding, &clusters, &segments, &out, cfg)?;
    let manifest = record_manifest(cfg, &table, max_cos, &embedding, Some(&clusters))?;
    info!(
        "bundle written to {}: {} points, {} clusters, KL {:.4}",
        out.display(),
        scene.points.len(),
        clusters.assignment.n_clusters,
        embedding.final_kl
    );
    Ok(RunOutcome {
        bundle_dir: out,
        table,
        embedding,
        clusters,
        scene,
        manifest,
    })
}
