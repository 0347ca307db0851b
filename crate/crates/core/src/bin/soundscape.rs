use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use soundscape::pipeline::{
    self, ClustersArtifact, EmbeddingArtifact, GatePolicy, PipelineConfig, PipelineError, SegmentsArtifact,
};
use soundscape::scene;
use soundscape::spatial::VerticalFit;

/// Output directory used when neither `--out` nor the config file sets one.
const OUT_ENV: &str = "SOUNDSCAPE_OUT";

#[derive(Parser)]
#[command(name = "soundscape", version, about = "Audio segments to an explorable 3-D scene")]
struct Cli {
    /// JSON pipeline config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output (bundle) directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Whole pipeline, audio in, scene bundle out.
    Run {
        #[command(flatten)]
        segment: SegmentArgs,
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        tsne: TsneArgs,
        #[command(flatten)]
        cluster: ClusterArgs,
        #[command(flatten)]
        scene: SceneArgs,
    },
    /// Cut the input into equal segments.
    Segment {
        #[command(flatten)]
        segment: SegmentArgs,
    },
    /// MFCC feature table from segments.json.
    Features {
        #[arg(long)]
        segments: Option<PathBuf>,
        #[command(flatten)]
        features: FeatureArgs,
    },
    /// t-SNE grid search on a feature table (.csv or .json).
    Embed {
        #[arg(long)]
        features: Option<PathBuf>,
        #[command(flatten)]
        tsne: TsneArgs,
    },
    /// DBSCAN eps sweep and noise reassignment on embedding.json.
    Cluster {
        #[arg(long)]
        embedding: Option<PathBuf>,
        #[command(flatten)]
        cluster: ClusterArgs,
    },
    /// scene.json from embedding, clusters and segments.
    Scene {
        #[arg(long)]
        embedding: Option<PathBuf>,
        #[arg(long)]
        clusters: Option<PathBuf>,
        #[arg(long)]
        segments: Option<PathBuf>,
        #[command(flatten)]
        scene: SceneArgs,
    },
    /// Statistics for one trajectory log.
    Analyze {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
    },
    /// Check a scene.json against its schema and the files it references.
    Validate {
        #[arg(long)]
        scene: PathBuf,
    },
}

#[derive(Args, Default)]
struct SegmentArgs {
    /// Input WAV files.
    #[arg(long = "input", short = 'i')]
    inputs: Vec<PathBuf>,
    /// Sum the inputs into one track before segmenting.
    #[arg(long)]
    mix: bool,
    #[arg(long)]
    source_id: Option<String>,
    #[arg(long)]
    segment_seconds: Option<f64>,
}

#[derive(Args, Default)]
struct FeatureArgs {
    #[arg(long)]
    frame_ms: Option<f64>,
    #[arg(long)]
    hop_ms: Option<f64>,
    #[arg(long)]
    n_fft: Option<usize>,
    #[arg(long)]
    n_mels: Option<usize>,
    /// Z-score each feature column.
    #[arg(long)]
    standardize: bool,
}

#[derive(Args, Default)]
struct TsneArgs {
    #[arg(long = "perplexity", value_delimiter = ',')]
    perplexities: Vec<f64>,
    #[arg(long = "learning-rate", value_delimiter = ',')]
    learning_rates: Vec<f64>,
    #[arg(long)]
    runs_per_cell: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_iter: Option<usize>,
    #[arg(long, value_enum)]
    gate: Option<GateArg>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum GateArg {
    Strict,
    Loose,
    AllowFailed,
}

#[derive(Args, Default)]
struct ClusterArgs {
    /// Explicit eps values to sweep.
    #[arg(long = "eps", value_delimiter = ',')]
    eps: Vec<f64>,
    #[arg(long)]
    eps_steps: Option<usize>,
    #[arg(long)]
    min_samples: Option<usize>,
    /// JSON object of cluster id to display name.
    #[arg(long)]
    names: Option<PathBuf>,
}

#[derive(Args, Default)]
struct SceneArgs {
    #[arg(long)]
    panorama: Option<PathBuf>,
    #[arg(long)]
    radius: Option<f64>,
    /// Rescale elevations into LO,HI.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    vertical_fit: Vec<f64>,
}

impl SegmentArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if !self.inputs.is_empty() {
            cfg.inputs = self.inputs.clone();
        }
        cfg.mix |= self.mix;
        if self.source_id.is_some() {
            cfg.source_id = self.source_id.clone();
        }
        if let Some(v) = self.segment_seconds {
            cfg.segment_duration_s = v;
        }
    }
}

impl FeatureArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        let m = &mut cfg.mfcc;
        m.frame_ms = self.frame_ms.or(m.frame_ms);
        m.hop_ms = self.hop_ms.or(m.hop_ms);
        m.n_fft = self.n_fft.or(m.n_fft);
        m.n_mels = self.n_mels.or(m.n_mels);
        cfg.standardize |= self.standardize;
    }
}

impl TsneArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        let t = &mut cfg.tsne;
        if !self.perplexities.is_empty() {
            t.perplexities = self.perplexities.clone();
        }
        if !self.learning_rates.is_empty() {
            t.learning_rates = self.learning_rates.clone();
        }
        t.runs_per_cell = self.runs_per_cell.unwrap_or(t.runs_per_cell);
        t.seed = self.seed.unwrap_or(t.seed);
        t.n_iter = self.n_iter.unwrap_or(t.n_iter);
        if let Some(g) = self.gate {
            cfg.gate_policy = match g {
                GateArg::Strict => GatePolicy::Strict,
                GateArg::Loose => GatePolicy::Loose,
                GateArg::AllowFailed => GatePolicy::AllowFailed,
            };
        }
    }
}

impl ClusterArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if !self.eps.is_empty() {
            cfg.eps.values = Some(self.eps.clone());
        }
        cfg.eps.steps = self.eps_steps.unwrap_or(cfg.eps.steps);
        cfg.eps.min_samples = self.min_samples.unwrap_or(cfg.eps.min_samples);
        if self.names.is_some() {
            cfg.cluster_names = self.names.clone();
        }
    }
}

impl SceneArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if self.panorama.is_some() {
            cfg.panorama = self.panorama.clone();
        }
        cfg.radius = self.radius.unwrap_or(cfg.radius);
        if let [z_lo, z_hi] = self.vertical_fit[..] {
            cfg.vertical_fit = Some(VerticalFit { z_lo, z_hi });
        }
    }
}

/// Config file, then `$SOUNDSCAPE_OUT` if the file names no output
/// directory, then `--out`.
fn base_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let (mut cfg, file_sets_out) = match &cli.config {
        Some(path) => {
            let cfg = PipelineConfig::from_json_file(path)?;
            let text = std::fs::read_to_string(path).unwrap_or_default();
            let has_out = serde_json::from_str::<serde_json::Value>(&text)
                .ok()
                .and_then(|v| v.get("output_dir").cloned())
                .is_some();
            (cfg, has_out)
        }
        None => (PipelineConfig::default(), false),
    };
    if !file_sets_out {
        if let Some(dir) = std::env::var_os(OUT_ENV) {
            cfg.output_dir = PathBuf::from(dir);
        }
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn or_in(path: &Option<PathBuf>, dir: &Path, name: &str) -> PathBuf {
    path.clone().unwrap_or_else(|| dir.join(name))
}

fn execute(cli: &Cli) -> Result<(), PipelineError> {
    let mut cfg = base_config(cli)?;
    let out = |cfg: &PipelineConfig| cfg.output_dir.clone();
    match &cli.command {
        Command::Run {
            segment,
            features,
            tsne,
            cluster,
            scene,
        } => {
            segment.apply(&mut cfg);
            features.apply(&mut cfg);
            tsne.apply(&mut cfg);
            cluster.apply(&mut cfg);
            scene.apply(&mut cfg);
            let outcome = pipeline::run(&cfg)?;
            println!("{}", outcome.bundle_dir.join(pipeline::SCENE_FILE).display());
        }
        Command::Segment { segment } => {
            segment.apply(&mut cfg);
            let artifact = pipeline::stage_segment(&cfg)?;
            println!("{} segments", artifact.files.len());
        }
        Command::Features { segments, features } => {
            features.apply(&mut cfg);
            let path = or_in(segments, &out(&cfg), pipeline::SEGMENTS_FILE);
            let table = pipeline::stage_features(&path, &cfg)?;
            println!("{} x {}", table.len(), table.width());
        }
        Command::Embed { features, tsne } => {
            tsne.apply(&mut cfg);
            let path = or_in(features, &out(&cfg), pipeline::FEATURES_CSV);
            let table = pipeline::load_features(&path)?;
            let emb = pipeline::stage_embed(&table, &cfg)?;
            println!("final KL {:.6} ({:?})", emb.final_kl, emb.converged_gate);
        }
        Command::Cluster { embedding, cluster } => {
            cluster.apply(&mut cfg);
            let path = or_in(embedding, &out(&cfg), pipeline::EMBEDDING_FILE);
            let emb: EmbeddingArtifact = pipeline::read_artifact(&path)?;
            let c = pipeline::stage_cluster(&emb, &cfg)?;
            println!("{} clusters at eps {}", c.assignment.n_clusters, c.assignment.eps_used);
        }
        Command::Scene {
            embedding,
            clusters,
            segments,
            scene,
        } => {
            scene.apply(&mut cfg);
            let dir = out(&cfg);
            let seg_path = or_in(segments, &dir, pipeline::SEGMENTS_FILE);
            let emb: EmbeddingArtifact = pipeline::read_artifact(or_in(embedding, &dir, pipeline::EMBEDDING_FILE))?;
            let cl: ClustersArtifact = pipeline::read_artifact(or_in(clusters, &dir, pipeline::CLUSTERS_FILE))?;
            let seg: SegmentsArtifact = pipeline::read_artifact(&seg_path)?;
            // Audio paths in the scene are relative to the segments' directory.
            let bundle = seg_path.parent().map(Path::to_path_buf).unwrap_or_default();
            pipeline::stage_scene(&emb, &cl, &seg, &bundle, &cfg)?;
            println!("{}", bundle.join(pipeline::SCENE_FILE).display());
        }
        Command::Analyze { scene, trajectory } => {
            let stats = pipeline::stage_analyze(scene, trajectory, &out(&cfg))?;
            println!(
                "{} events, coverage {:.3}, revisit rate {:.3}",
                stats.n_events, stats.coverage, stats.revisit_rate
            );
        }
        Command::Validate { scene: path } => {
            let violations = scene::validate_scene(path)?;
            if !violations.is_empty() {
                return Err(PipelineError::Validation(violations));
            }
            println!("{}: ok", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            error!("{err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
