//! The `scene.json` manifest consumed by the explorer.
//!
//! A bundle directory holds `scene.json`, an `audio/` folder with one WAV
//! per point and the panorama image. Every path in the manifest is relative
//! to the manifest's directory. Positions keep the mapping convention
//! (`x`, `y` horizontal, `z` elevation); renderers remap axes themselves.
//!
//! Exports are canonical JSON (see [`crate::json`]) so the same manifest
//! always produces the same bytes.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::SegmentFile;
use crate::clustering::ClusterAssignment;
use crate::json;
use crate::spatial::{seam_pair, Point3D};

pub const SCENE_VERSION: &str = "1.0";
pub const AXIS_CONVENTION: &str = "x,y horizontal; z elevation";
/// Relative tolerance of the radial check. Exported floats carry 9
/// significant digits, so exact equality cannot survive a round trip.
pub const RADIUS_REL_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("{what}: expected {expected} entries, got {found}")]
    CountMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("audio file {0} does not exist")]
    MissingAudio(PathBuf),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scene manifest {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported scene version {found:?} (expected {SCENE_VERSION:?})")]
    Version { found: String },
    #[error("serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Colors {
    pub unexplored: String,
    pub playing: String,
    pub explored: String,
}

impl Default for Colors {
    fn default() -> Self {
        Self {
            unexplored: "#FFFFFF".into(),
            playing: "#FF0000".into(),
            explored: "#00FF00".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePoint {
    pub id: usize,
    pub position: Position,
    pub theta: f64,
    pub audio: String,
    pub cluster: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_name: Option<String>,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub version: String,
    pub source_id: String,
    pub axis_convention: String,
    pub radius: f64,
    pub panorama: String,
    pub n_clusters: usize,
    pub colors: Colors,
    pub points: Vec<ScenePoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seam_diagnostic: Option<[usize; 2]>,
}

impl SceneManifest {
    pub fn point(&self, id: usize) -> Option<&ScenePoint> {
        self.points
            .get(id)
            .filter(|p| p.id == id)
            .or_else(|| self.points.iter().find(|p| p.id == id))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub source_id: String,
    pub radius: f64,
    pub duration_s: f64,
    /// Panorama path relative to the bundle directory.
    pub panorama: String,
    pub colors: Colors,
}

/// Builds the manifest. `audio` paths are relative to `bundle_dir` and
/// must exist.
pub fn assemble_scene(
    points: &[Point3D],
    assignment: &ClusterAssignment,
    audio: &[SegmentFile],
    bundle_dir: &Path,
    cfg: &SceneConfig,
) -> Result<SceneManifest, SceneError> {
    let n = points.len();
    for (what, found) in [("cluster labels", assignment.len()), ("audio files", audio.len())] {
        if found != n {
            return Err(SceneError::CountMismatch {
                what,
                expected: n,
                found,
            });
        }
    }
    let mut audio_by_index = audio.to_vec();
    audio_by_index.sort_by_key(|a| a.index);
    let scene_points = points
        .iter()
        .zip(&audio_by_index)
        .map(|(p, a)| {
            let full = bundle_dir.join(&a.path);
            if !full.is_file() {
                return Err(SceneError::MissingAudio(full));
            }
            let cluster = assignment.labels[p.segment_index];
            Ok(ScenePoint {
                id: p.segment_index,
                position: Position { x: p.x, y: p.y, z: p.z },
                theta: p.theta,
                audio: a.path.clone(),
                cluster,
                cluster_name: assignment.name_of(cluster).map(str::to_string),
                duration_s: cfg.duration_s,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SceneManifest {
        version: SCENE_VERSION.to_string(),
        source_id: cfg.source_id.clone(),
        axis_convention: AXIS_CONVENTION.to_string(),
        radius: cfg.radius,
        panorama: cfg.panorama.clone(),
        n_clusters: assignment.n_clusters,
        colors: cfg.colors.clone(),
        points: scene_points,
        seam_diagnostic: seam_pair(points).map(|(a, b)| [a, b]),
    })
}

pub fn to_canonical_json(manifest: &SceneManifest) -> Result<String, SceneError> {
    Ok(json::to_canonical_string(manifest)?)
}

pub fn export_scene(manifest: &SceneManifest, path: impl AsRef<Path>) -> Result<(), SceneError> {
    let path = path.as_ref();
    fs::write(path, to_canonical_json(manifest)?).map_err(|source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a manifest and checks its version. Does not validate invariants.
pub fn load_scene(path: impl AsRef<Path>) -> Result<SceneManifest, SceneError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let manifest: SceneManifest = serde_json::from_str(&text).map_err(|source| SceneError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    if manifest.version != SCENE_VERSION {
        return Err(SceneError::Version {
            found: manifest.version,
        });
    }
    Ok(manifest)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    UnsupportedVersion,
    InvalidRadius,
    DuplicatePointId,
    PointIdMismatch,
    NonFinitePosition,
    PositionRadiusMismatch,
    ClusterOutOfRange,
    MissingAudio,
    MissingPanorama,
    InvalidColor,
    SeamDiagnosticUnknownId,
}

impl ViolationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::UnsupportedVersion => "unsupported_version",
            ViolationKind::InvalidRadius => "invalid_radius",
            ViolationKind::DuplicatePointId => "duplicate_point_id",
            ViolationKind::PointIdMismatch => "point_id_mismatch",
            ViolationKind::NonFinitePosition => "non_finite_position",
            ViolationKind::PositionRadiusMismatch => "position_radius_mismatch",
            ViolationKind::ClusterOutOfRange => "cluster_out_of_range",
            ViolationKind::MissingAudio => "missing_audio",
            ViolationKind::MissingPanorama => "missing_panorama",
            ViolationKind::InvalidColor => "invalid_color",
            ViolationKind::SeamDiagnosticUnknownId => "seam_diagnostic_unknown_id",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<usize>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.point {
            Some(p) => write!(f, "{} (point {p}): {}", self.kind.as_str(), self.detail),
            None => write!(f, "{}: {}", self.kind.as_str(), self.detail),
        }
    }
}

fn is_hex_color(s: &str) -> bool {
    let Some(digits) = s.strip_prefix('#') else {
        return false;
    };
    matches!(digits.len(), 3 | 6 | 8) && digits.chars().all(|c| c.is_ascii_hexdigit())
}

/// Checks every manifest invariant and lists all violations. Asset paths
/// are only checked when `base_dir` is given.
pub fn validate_manifest(m: &SceneManifest, base_dir: Option<&Path>) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |kind, point, detail: String| out.push(Violation { kind, point, detail });

    if m.version != SCENE_VERSION {
        push(
            ViolationKind::UnsupportedVersion,
            None,
            format!("{:?} (expected {SCENE_VERSION:?})", m.version),
        );
    }
    let radius_ok = m.radius > 0.0 && m.radius.is_finite();
    if !radius_ok {
        push(ViolationKind::InvalidRadius, None, format!("radius {}", m.radius));
    }
    for (name, value) in [
        ("unexplored", &m.colors.unexplored),
        ("playing", &m.colors.playing),
        ("explored", &m.colors.explored),
    ] {
        if !is_hex_color(value) {
            push(ViolationKind::InvalidColor, None, format!("{name} = {value:?}"));
        }
    }
    if let Some(dir) = base_dir {
        if !dir.join(&m.panorama).is_file() {
            push(ViolationKind::MissingPanorama, None, m.panorama.clone());
        }
    }

    let mut seen = HashSet::new();
    for (index, p) in m.points.iter().enumerate() {
        if !seen.insert(p.id) {
            push(
                ViolationKind::DuplicatePointId,
                Some(p.id),
                format!("id {} repeated", p.id),
            );
        } else if p.id != index {
            push(
                ViolationKind::PointIdMismatch,
                Some(p.id),
                format!("id {} at position {index}", p.id),
            );
        }
        let pos = p.position;
        if ![pos.x, pos.y, pos.z, p.theta].iter().all(|v| v.is_finite()) {
            push(ViolationKind::NonFinitePosition, Some(p.id), format!("{pos:?}"));
        } else if radius_ok {
            let r = pos.x.hypot(pos.y);
            if (r - m.radius).abs() > RADIUS_REL_TOL * m.radius {
                push(
                    ViolationKind::PositionRadiusMismatch,
                    Some(p.id),
                    format!("horizontal radius {r} != {}", m.radius),
                );
            }
        }
        if p.cluster >= m.n_clusters {
            push(
                ViolationKind::ClusterOutOfRange,
                Some(p.id),
                format!("cluster {} >= n_clusters {}", p.cluster, m.n_clusters),
            );
        }
        if let Some(dir) = base_dir {
            if !dir.join(&p.audio).is_file() {
                push(ViolationKind::MissingAudio, Some(p.id), p.audio.clone());
            }
        }
    }
    if let Some(pair) = m.seam_diagnostic {
        for id in pair {
            if !seen.contains(&id) {
                push(
                    ViolationKind::SeamDiagnosticUnknownId,
                    Some(id),
                    format!("seam id {id}"),
                );
            }
        }
    }
    out
}

/// Loads `path` and validates it against its own directory. Returns the
/// (possibly empty) list of violations; I/O and JSON errors are `Err`.
pub fn validate_scene(path: impl AsRef<Path>) -> Result<Vec<Violation>, SceneError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let manifest: SceneManifest = serde_json::from_str(&text).map_err(|source| SceneError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    Ok(validate_manifest(&manifest, Some(dir)))
}
