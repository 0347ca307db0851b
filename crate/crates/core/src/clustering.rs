//! DBSCAN over the 2-D embedding, an `eps` sweep, and nearest-core
//! reassignment of noise points.
//!
//! Neighbourhoods are closed Euclidean balls that include the point itself,
//! so a point is core when at least `min_samples` points (itself included)
//! lie within `eps`. Clusters are grown breadth-first from the lowest
//! unvisited core index, visiting neighbours in ascending index order, which
//! makes border-point assignment deterministic.

use std::collections::{BTreeMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NOISE: i64 = -1;
pub const DEFAULT_MIN_SAMPLES: usize = 5;
pub const DEFAULT_SWEEP_STEPS: usize = 40;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("no clusters found; noise cannot be reassigned")]
    NoClusters,
    #[error("eps sweep needs at least one value")]
    EmptySweep,
    #[error("eps must be positive and finite, got {0}")]
    InvalidEps(f64),
    #[error("min_samples must be at least 1")]
    InvalidMinSamples,
    #[error("need at least one point")]
    NoPoints,
    #[error("need at least two points to derive a sweep range")]
    TooFewPoints,
    #[error("{what}: expected {expected} entries, got {found}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
}

/// Raw DBSCAN output; `labels` use [`NOISE`] for unreachable points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbscanResult {
    pub labels: Vec<i64>,
    pub core_flags: Vec<bool>,
    pub n_clusters: usize,
    pub eps: f64,
    pub min_samples: usize,
}

impl DbscanResult {
    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }
}

fn dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

pub fn dbscan(coords: &[[f64; 2]], eps: f64, min_samples: usize) -> Result<DbscanResult, ClusterError> {
    if coords.is_empty() {
        return Err(ClusterError::NoPoints);
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(ClusterError::InvalidEps(eps));
    }
    if min_samples == 0 {
        return Err(ClusterError::InvalidMinSamples);
    }
    let n = coords.len();
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| dist(&coords[i], &coords[j]) <= eps).collect())
        .collect();
    let core_flags: Vec<bool> = neighbours.iter().map(|nb| nb.len() >= min_samples).collect();

    let mut labels = vec![NOISE; n];
    let mut n_clusters = 0usize;
    let mut queue = VecDeque::new();
    for seed in 0..n {
        if labels[seed] != NOISE || !core_flags[seed] {
            continue;
        }
        let id = n_clusters as i64;
        n_clusters += 1;
        labels[seed] = id;
        queue.push_back(seed);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbours[p] {
                if labels[q] == NOISE {
                    labels[q] = id;
                    if core_flags[q] {
                        queue.push_back(q);
                    }
                }
            }
        }
    }
    Ok(DbscanResult {
        labels,
        core_flags,
        n_clusters,
        eps,
        min_samples,
    })
}

/// Chosen sweep run and the outcome of every tried `eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub chosen: DbscanResult,
    /// `(eps, n_clusters, noise)` per sweep value, in input order.
    pub trials: Vec<(f64, usize, usize)>,
    /// Set when no `eps` produced a single cluster.
    pub all_noise: bool,
}

/// Runs DBSCAN for each `eps` and keeps the run with the most clusters,
/// then the least noise, then the smallest `eps`.
pub fn eps_sweep(coords: &[[f64; 2]], eps_values: &[f64], min_samples: usize) -> Result<SweepResult, ClusterError> {
    if eps_values.is_empty() {
        return Err(ClusterError::EmptySweep);
    }
    let runs = eps_values
        .par_iter()
        .map(|&eps| dbscan(coords, eps, min_samples))
        .collect::<Result<Vec<_>, _>>()?;
    let trials = runs.iter().map(|r| (r.eps, r.n_clusters, r.noise_count())).collect();
    let chosen = runs
        .into_iter()
        .min_by(|a, b| {
            b.n_clusters
                .cmp(&a.n_clusters)
                .then(a.noise_count().cmp(&b.noise_count()))
                .then(a.eps.total_cmp(&b.eps))
        })
        .expect("non-empty sweep");
    let all_noise = chosen.n_clusters == 0;
    Ok(SweepResult {
        chosen,
        trials,
        all_noise,
    })
}

/// Linear-interpolated percentile (`q` in `[0, 100]`) of a sorted slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// `steps` values spaced geometrically between the 1st and 99th percentile
/// of the pairwise distances (strictly positive distances only).
pub fn default_eps_values(coords: &[[f64; 2]], steps: usize) -> Result<Vec<f64>, ClusterError> {
    let n = coords.len();
    let mut d: Vec<f64> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| dist(&coords[i], &coords[j]))
        .filter(|&v| v > 0.0)
        .collect();
    if d.is_empty() {
        return Err(ClusterError::TooFewPoints);
    }
    d.sort_by(f64::total_cmp);
    let lo = percentile(&d, 1.0);
    let hi = percentile(&d, 99.0);
    if steps <= 1 || hi <= lo {
        return Ok(vec![lo]);
    }
    let ratio = (hi / lo).ln() / (steps - 1) as f64;
    Ok((0..steps)
        .map(|k| {
            if k == steps - 1 {
                hi
            } else {
                lo * (ratio * k as f64).exp()
            }
        })
        .collect())
}

/// Final per-segment clustering after noise reassignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub n_clusters: usize,
    pub eps_used: f64,
    pub min_samples: usize,
    pub core_flags: Vec<bool>,
    /// Indices that DBSCAN labelled as noise before reassignment.
    #[serde(default)]
    pub reassigned: Vec<usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub names: BTreeMap<usize, String>,
}

impl ClusterAssignment {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn name_of(&self, cluster: usize) -> Option<&str> {
        self.names.get(&cluster).map(String::as_str)
    }

    /// Attaches user-supplied display names; ids outside the cluster range are ignored.
    pub fn with_names(mut self, names: BTreeMap<usize, String>) -> Self {
        self.names = names.into_iter().filter(|(k, _)| *k < self.n_clusters).collect();
        self
    }
}

/// Gives each noise point the label of its nearest core point
/// (lowest index on ties). Other labels are kept.
pub fn assign_noise(raw: &DbscanResult, coords: &[[f64; 2]]) -> Result<ClusterAssignment, ClusterError> {
    let n = raw.labels.len();
    if coords.len() != n || raw.core_flags.len() != n {
        return Err(ClusterError::LengthMismatch {
            what: "coordinates/core flags vs labels",
            expected: n,
            found: coords.len().min(raw.core_flags.len()),
        });
    }
    if raw.n_clusters == 0 {
        return Err(ClusterError::NoClusters);
    }
    let cores: Vec<usize> = (0..n).filter(|&i| raw.core_flags[i]).collect();
    let mut reassigned = Vec::new();
    let labels = (0..n)
        .map(|i| {
            if raw.labels[i] != NOISE {
                return raw.labels[i] as usize;
            }
            reassigned.push(i);
            let mut best = cores[0];
            let mut best_d = dist(&coords[i], &coords[best]);
            for &c in &cores[1..] {
                let d = dist(&coords[i], &coords[c]);
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            raw.labels[best] as usize
        })
        .collect();
    Ok(ClusterAssignment {
        labels,
        n_clusters: raw.n_clusters,
        eps_used: raw.eps,
        min_samples: raw.min_samples,
        core_flags: raw.core_flags.clone(),
        reassigned,
        names: BTreeMap::new(),
    })
}
