//! Exploration logs exported by the viewer and the analytics computed on them.
//!
//! A log is the ordered list of points a listener played. `dwell_ms` is
//! measured from playback start to playback end or pointer exit, whichever
//! comes first.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::SceneManifest;

pub const TRAJECTORY_VERSION: &str = "1.0";

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed trajectory log: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported trajectory version {0:?}")]
    Version(String),
    #[error("events out of order at index {index}: t_start_ms {t} < {prev}")]
    Unordered { index: usize, t: u64, prev: u64 },
    #[error("log references point ids not in the scene: {0:?}")]
    UnknownPoints(Vec<usize>),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

fn default_version() -> String {
    TRAJECTORY_VERSION.to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryEvent {
    pub point_id: usize,
    pub t_start_ms: u64,
    pub dwell_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    #[serde(default = "default_version")]
    pub version: String,
    pub session_id: String,
    pub scene_ref: String,
    pub events: Vec<TrajectoryEvent>,
    pub total_duration_ms: u64,
}

impl TrajectoryLog {
    /// Checks version, event order and that every id exists in `scene`.
    pub fn validate(&self, scene: &SceneManifest) -> Result<(), TrajectoryError> {
        if self.version != TRAJECTORY_VERSION {
            return Err(TrajectoryError::Version(self.version.clone()));
        }
        for (index, pair) in self.events.windows(2).enumerate() {
            if pair[1].t_start_ms < pair[0].t_start_ms {
                return Err(TrajectoryError::Unordered {
                    index: index + 1,
                    t: pair[1].t_start_ms,
                    prev: pair[0].t_start_ms,
                });
            }
        }
        let known: BTreeSet<usize> = scene.points.iter().map(|p| p.id).collect();
        let unknown: BTreeSet<usize> = self
            .events
            .iter()
            .map(|e| e.point_id)
            .filter(|id| !known.contains(id))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(TrajectoryError::UnknownPoints(unknown.into_iter().collect()))
        }
    }
}

pub fn parse_log_str(text: &str, scene: &SceneManifest) -> Result<TrajectoryLog, TrajectoryError> {
    let log: TrajectoryLog = serde_json::from_str(text)?;
    log.validate(scene)?;
    Ok(log)
}

pub fn parse_log(path: impl AsRef<Path>, scene: &SceneManifest) -> Result<TrajectoryLog, TrajectoryError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| TrajectoryError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_log_str(&text, scene)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryStats {
    pub n_points: usize,
    pub n_events: usize,
    pub unique_points: usize,
    /// Fraction of scene points played at least once.
    pub coverage: f64,
    pub total_dwell_ms: u64,
    /// Only clusters that were visited appear here.
    pub dwell_by_cluster: BTreeMap<usize, u64>,
    /// `[from][to]` counts of consecutive events, `n_clusters × n_clusters`.
    pub transition_matrix: Vec<Vec<u64>>,
    pub within_cluster_ratio: f64,
    pub revisit_rate: f64,
    pub angular_monotonicity: f64,
}

/// Signed angular step from `a` to `b`, wrapped into `[-π, π]`.
fn angular_step(a: f64, b: f64) -> f64 {
    let d = b - a;
    if d > PI {
        d - TAU
    } else if d < -PI {
        d + TAU
    } else {
        d
    }
}

pub fn compute_stats(log: &TrajectoryLog, scene: &SceneManifest) -> Result<TrajectoryStats, TrajectoryError> {
    let points = log
        .events
        .iter()
        .map(|e| scene.point(e.point_id).ok_or(e.point_id))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|id| TrajectoryError::UnknownPoints(vec![id]))?;

    let k = scene
        .n_clusters
        .max(points.iter().map(|p| p.cluster + 1).max().unwrap_or(0));
    let n_events = log.events.len();
    let unique_points = points.iter().map(|p| p.id).collect::<BTreeSet<_>>().len();

    let mut dwell_by_cluster = BTreeMap::new();
    for (e, p) in log.events.iter().zip(&points) {
        *dwell_by_cluster.entry(p.cluster).or_insert(0) += e.dwell_ms;
    }
    let mut transition_matrix = vec![vec![0u64; k]; k];
    for pair in points.windows(2) {
        transition_matrix[pair[0].cluster][pair[1].cluster] += 1;
    }
    let transitions = n_events.saturating_sub(1);
    let diagonal: u64 = (0..k).map(|c| transition_matrix[c][c]).sum();

    let (mut forward, mut backward) = (0usize, 0usize);
    for pair in points.windows(2) {
        let step = angular_step(pair[0].theta, pair[1].theta);
        if step > 0.0 {
            forward += 1;
        } else if step < 0.0 {
            backward += 1;
        }
    }
    let moving = forward + backward;

    let ratio = |num: f64, den: usize| if den == 0 { 0.0 } else { num / den as f64 };
    Ok(TrajectoryStats {
        n_points: scene.points.len(),
        n_events,
        unique_points,
        coverage: ratio(unique_points as f64, scene.points.len()),
        total_dwell_ms: log.events.iter().map(|e| e.dwell_ms).sum(),
        dwell_by_cluster,
        transition_matrix,
        within_cluster_ratio: ratio(diagonal as f64, transitions),
        revisit_rate: ratio((n_events - unique_points) as f64, n_events),
        angular_monotonicity: ratio(forward.max(backward) as f64, moving),
    })
}

impl TrajectoryStats {
    pub fn dwell_csv(&self) -> Result<String, TrajectoryError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["cluster", "dwell_ms"])?;
        for (c, ms) in &self.dwell_by_cluster {
            w.write_record([c.to_string(), ms.to_string()])?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?).expect("ascii csv"))
    }

    pub fn transitions_csv(&self) -> Result<String, TrajectoryError> {
        let k = self.transition_matrix.len();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(std::iter::once("from".to_string()).chain((0..k).map(|c| format!("to_{c}"))))?;
        for (from, row) in self.transition_matrix.iter().enumerate() {
            w.write_record(std::iter::once(from.to_string()).chain(row.iter().map(u64::to_string)))?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?).expect("ascii csv"))
    }

    /// Pretty JSON with full float precision, so it reads back exactly.
    pub fn to_json(&self) -> Result<String, TrajectoryError> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Writes `stats.json`, `dwell.csv` and `transitions.csv` into `dir`.
pub fn export_stats(stats: &TrajectoryStats, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, TrajectoryError> {
    let dir = dir.as_ref();
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| TrajectoryError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let files = [
        ("stats.json", stats.to_json()?),
        ("dwell.csv", stats.dwell_csv()?),
        ("transitions.csv", stats.transitions_csv()?),
    ];
    files
        .into_iter()
        .map(|(name, body)| {
            let path = dir.join(name);
            fs::write(&path, body).map_err(io(&path))?;
            Ok(path)
        })
        .collect()
}

pub fn load_stats(path: impl AsRef<Path>) -> Result<TrajectoryStats, TrajectoryError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| TrajectoryError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}
