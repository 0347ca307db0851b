//! Exact O(N²) t-SNE.
//!
//! High-dimensional affinities are Gaussian conditionals whose precision is
//! binary-searched per point to hit a target perplexity, symmetrised into a
//! joint distribution `P`. The 2-D layout uses a Student-t kernel `Q` and is
//! found by gradient descent on `KL(P || Q)` with momentum and an early
//! exaggeration phase.

use std::collections::BTreeMap;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureTable;

/// Floor applied to off-diagonal joint probabilities.
pub const JOINT_FLOOR: f64 = 1e-12;
/// Allowed `|2^H - perplexity|` for the per-row precision search.
pub const PERPLEXITY_TOL: f64 = 1e-5;
pub const PERPLEXITY_MAX_ITER: usize = 50;
pub const STRICT_KL: f64 = 0.5;
pub const LOOSE_KL: f64 = 1.0;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("perplexity {perplexity} must be > 1 and < number of points {n}")]
    InvalidPerplexity { perplexity: f64, n: usize },
    #[error("invalid t-SNE parameters: {0}")]
    InvalidParams(String),
    #[error("empty parameter grid")]
    EmptyGrid,
    #[error("matrix is not square or sizes disagree")]
    Shape,
    #[error("optimizer diverged at iteration {0}")]
    Diverged(usize),
}

/// Dense row-major N×N matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, EmbeddingError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(EmbeddingError::Shape);
        }
        Ok(Self { n, data: rows.concat() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

pub fn pairwise_sq_dists(table: &FeatureTable) -> Result<SquareMatrix, EmbeddingError> {
    pairwise_sq_dists_rows(&table.rows)
}

pub fn pairwise_sq_dists_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<SquareMatrix, EmbeddingError> {
    let n = rows.len();
    if n < 2 {
        return Err(EmbeddingError::TooFewPoints(n));
    }
    let mut d = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = rows[i]
                .as_ref()
                .iter()
                .zip(rows[j].as_ref())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d.set(i, j, v);
            d.set(j, i, v);
        }
    }
    Ok(d)
}

/// Row-stochastic `P(j|i)` plus the per-row search outcome.
#[derive(Debug, Clone)]
pub struct Conditionals {
    pub p: SquareMatrix,
    pub betas: Vec<f64>,
    /// Rows whose perplexity missed the tolerance after `max_iter` steps.
    pub unconverged: Vec<usize>,
}

/// `2^H` of a probability vector, entropy in bits.
pub fn perplexity_of(row: &[f64]) -> f64 {
    let h: f64 = row.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum();
    h.exp2()
}

fn gaussian_row(d2: &[f64], i: usize, shift: f64, beta: f64, out: &mut [f64]) {
    let mut total = 0.0;
    for (j, (o, &d)) in out.iter_mut().zip(d2).enumerate() {
        *o = if j == i { 0.0 } else { (-beta * (d - shift)).exp() };
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Binary-searches a Gaussian precision for every row so that
/// `|2^H(P(.|i)) - perplexity| <= tol`. Rows that miss after `max_iter`
/// steps keep their best candidate and are listed in `unconverged`.
pub fn calibrate_conditionals(
    d2: &SquareMatrix,
    perplexity: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Conditionals, EmbeddingError> {
    let n = d2.n();
    if n < 2 {
        return Err(EmbeddingError::TooFewPoints(n));
    }
    if !(perplexity > 1.0 && perplexity < n as f64) {
        return Err(EmbeddingError::InvalidPerplexity { perplexity, n });
    }
    let mut p = SquareMatrix::zeros(n);
    let mut betas = vec![0.0; n];
    let mut unconverged = Vec::new();
    let mut row = vec![0.0; n];

    for (i, beta_out) in betas.iter_mut().enumerate() {
        let d = d2.row(i);
        let others = || d.iter().enumerate().filter(move |&(j, _)| j != i).map(|(_, &v)| v);
        let shift = others().fold(f64::INFINITY, f64::min);
        let spread = others().map(|v| v - shift).sum::<f64>() / (n - 1) as f64;
        let mut beta = if spread > 0.0 { 1.0 / spread } else { 1.0 };
        let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
        let mut best = (f64::INFINITY, beta);
        let mut converged = false;

        for _ in 0..max_iter.max(1) {
            gaussian_row(d, i, shift, beta, &mut row);
            let err = perplexity_of(&row) - perplexity;
            if err.abs() < best.0 {
                best = (err.abs(), beta);
            }
            if err.abs() <= tol {
                converged = true;
                break;
            }
            if err > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { 0.5 * (lo + hi) } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = 0.5 * (lo + hi);
            }
        }
        if !converged {
            unconverged.push(i);
        }
        *beta_out = best.1;
        gaussian_row(d, i, shift, best.1, &mut row);
        for (j, &v) in row.iter().enumerate() {
            p.set(i, j, v);
        }
    }
    if !unconverged.is_empty() {
        warn!(
            "perplexity calibration missed tolerance on {} of {n} rows",
            unconverged.len()
        );
    }
    Ok(Conditionals { p, betas, unconverged })
}

/// `p_ij = (p_{j|i} + p_{i|j}) / 2N`, off-diagonal entries floored at
/// [`JOINT_FLOOR`] and the whole matrix renormalised to sum to one.
pub fn symmetrize(cond: &SquareMatrix) -> SquareMatrix {
    let n = cond.n();
    let mut p = SquareMatrix::zeros(n);
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let v = ((cond.get(i, j) + cond.get(j, i)) / (2.0 * n as f64)).max(JOINT_FLOOR);
                p.set(i, j, v);
                total += v;
            }
        }
    }
    for v in &mut p.data {
        *v /= total;
    }
    p
}

/// Joint affinities for a feature table at the given perplexity.
pub fn joint_probabilities(
    table: &FeatureTable,
    perplexity: f64,
) -> Result<(SquareMatrix, Vec<usize>), EmbeddingError> {
    let d2 = pairwise_sq_dists(table)?;
    let cond = calibrate_conditionals(&d2, perplexity, PERPLEXITY_TOL, PERPLEXITY_MAX_ITER)?;
    Ok((symmetrize(&cond.p), cond.unconverged))
}

/// Student-t weights `w_ij = 1 / (1 + |y_i - y_j|^2)` and their off-diagonal sum.
fn student_weights(coords: &[[f64; 2]]) -> (SquareMatrix, f64) {
    let n = coords.len();
    let mut w = SquareMatrix::zeros(n);
    let mut z = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = coords[i][0] - coords[j][0];
            let dy = coords[i][1] - coords[j][1];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            w.set(i, j, v);
            w.set(j, i, v);
            z += 2.0 * v;
        }
    }
    (w, z)
}

/// `KL(P || Q)` with `Q` the normalised Student-t kernel over `coords`.
pub fn kl_divergence(p: &SquareMatrix, coords: &[[f64; 2]]) -> Result<f64, EmbeddingError> {
    let n = p.n();
    if coords.len() != n {
        return Err(EmbeddingError::Shape);
    }
    let (w, z) = student_weights(coords);
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            let pij = p.get(i, j);
            if i != j && pij > 0.0 {
                kl += pij * (pij * z / w.get(i, j)).ln();
            }
        }
    }
    Ok(kl)
}

/// `dKL/dy_i = 4 Σ_j (s·p_ij - q_ij)(y_i - y_j) / (1 + |y_i - y_j|^2)`,
/// where `s` scales `P` (early exaggeration; 1 for the plain gradient).
pub fn kl_gradient(p: &SquareMatrix, coords: &[[f64; 2]], scale: f64) -> Vec<[f64; 2]> {
    let n = coords.len();
    let (w, z) = student_weights(coords);
    (0..n)
        .map(|i| {
            let mut g = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let wij = w.get(i, j);
                let coeff = 4.0 * (scale * p.get(i, j) - wij / z) * wij;
                g[0] += coeff * (coords[i][0] - coords[j][0]);
                g[1] += coeff * (coords[i][1] - coords[j][1]);
            }
            g
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneParams {
    pub perplexity: f64,
    pub learning_rate: f64,
    pub n_iter: usize,
    pub early_exaggeration_factor: f64,
    /// Iterations with exaggerated `P`; momentum switches at the same point.
    pub exaggeration_iters: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub seed: u64,
    pub init_scale: f64,
}

impl Default for TsneParams {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            learning_rate: 200.0,
            n_iter: 1000,
            early_exaggeration_factor: 12.0,
            exaggeration_iters: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            seed: 0,
            init_scale: 1e-4,
        }
    }
}

impl TsneParams {
    pub fn validate(&self, n: usize) -> Result<(), EmbeddingError> {
        if !(self.perplexity > 1.0 && self.perplexity < n as f64) {
            return Err(EmbeddingError::InvalidPerplexity {
                perplexity: self.perplexity,
                n,
            });
        }
        self.validate_optimizer()
    }

    pub fn validate_optimizer(&self) -> Result<(), EmbeddingError> {
        let bad = |m: &str| Err(EmbeddingError::InvalidParams(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.n_iter < 250 || self.n_iter < self.exaggeration_iters {
            return bad("n_iter must be at least 250 and cover the exaggeration phase");
        }
        if self.early_exaggeration_factor.is_nan() || self.early_exaggeration_factor < 1.0 {
            return bad("early_exaggeration_factor must be >= 1");
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return bad("init_scale must be positive");
        }
        Ok(())
    }
}

/// Quality tier of a run's final KL divergence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateTier {
    /// `KL < 0.5`
    Strict,
    /// `KL < 1.0`
    Loose,
    Failed,
}

impl GateTier {
    pub fn from_kl(kl: f64) -> Self {
        if kl < STRICT_KL {
            GateTier::Strict
        } else if kl < LOOSE_KL {
            GateTier::Loose
        } else {
            GateTier::Failed
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding2D {
    pub coords: Vec<[f64; 2]>,
    pub final_kl: f64,
    pub params: TsneParams,
    pub converged_gate: GateTier,
    /// KL on the un-exaggerated `P` right after early exaggeration ends.
    pub kl_after_exaggeration: f64,
}

impl Embedding2D {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

/// Runs gradient descent from a seeded Gaussian initialisation. Coordinates
/// are re-centred to zero mean after every step.
pub fn tsne_optimize(p: &SquareMatrix, params: &TsneParams) -> Result<Embedding2D, EmbeddingError> {
    let n = p.n();
    if n < 2 {
        return Err(EmbeddingError::TooFewPoints(n));
    }
    // `P` is already calibrated, so only the optimizer settings matter here.
    params.validate_optimizer()?;

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let normal = Normal::new(0.0, params.init_scale).map_err(|e| EmbeddingError::InvalidParams(e.to_string()))?;
    let mut coords: Vec<[f64; 2]> = (0..n).map(|_| [rng.sample(normal), rng.sample(normal)]).collect();
    recenter(&mut coords);
    let mut velocity = vec![[0.0; 2]; n];
    let mut kl_after_exaggeration = f64::NAN;

    for it in 0..params.n_iter {
        let exaggerating = it < params.exaggeration_iters;
        if it == params.exaggeration_iters {
            kl_after_exaggeration = kl_divergence(p, &coords)?;
        }
        let (scale, momentum) = if exaggerating {
            (params.early_exaggeration_factor, params.initial_momentum)
        } else {
            (1.0, params.final_momentum)
        };
        let grad = kl_gradient(p, &coords, scale);
        for ((y, v), g) in coords.iter_mut().zip(&mut velocity).zip(&grad) {
            for k in 0..2 {
                v[k] = momentum * v[k] - params.learning_rate * g[k];
                y[k] += v[k];
            }
        }
        recenter(&mut coords);
        if coords.iter().flatten().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::Diverged(it));
        }
    }

    let final_kl = kl_divergence(p, &coords)?;
    if kl_after_exaggeration.is_nan() {
        kl_after_exaggeration = final_kl;
    }
    Ok(Embedding2D {
        coords,
        final_kl,
        params: params.clone(),
        converged_gate: GateTier::from_kl(final_kl),
        kl_after_exaggeration,
    })
}

fn recenter(coords: &mut [[f64; 2]]) {
    let n = coords.len() as f64;
    let mean = coords.iter().fold([0.0, 0.0], |acc, c| [acc[0] + c[0], acc[1] + c[1]]);
    let mean = [mean[0] / n, mean[1] / n];
    for c in coords {
        c[0] -= mean[0];
        c[1] -= mean[1];
    }
}

/// Outcome of one (cell, run) pair in a grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub cell: usize,
    pub run: usize,
    pub perplexity: f64,
    pub learning_rate: f64,
    pub seed: u64,
    pub final_kl: f64,
    pub gate: GateTier,
}

#[derive(Debug, Clone)]
pub struct GridSearch {
    pub best: Embedding2D,
    pub best_cell: usize,
    pub best_run: usize,
    pub runs: Vec<RunSummary>,
    /// Perplexity targets whose calibration left rows unconverged.
    pub calibration_misses: BTreeMap<String, usize>,
}

/// Runs every cell `runs_per_cell` times (run `r` uses `seed + r`) and keeps
/// the lowest final KL. Ties go to the earlier cell, then the earlier run.
pub fn grid_search(
    table: &FeatureTable,
    grid: &[TsneParams],
    runs_per_cell: usize,
) -> Result<GridSearch, EmbeddingError> {
    if grid.is_empty() || runs_per_cell == 0 {
        return Err(EmbeddingError::EmptyGrid);
    }
    let n = table.len();
    for cell in grid {
        cell.validate(n)?;
    }
    let d2 = pairwise_sq_dists(table)?;

    let mut perplexities: Vec<f64> = grid.iter().map(|c| c.perplexity).collect();
    perplexities.sort_by(f64::total_cmp);
    perplexities.dedup();
    let joints: Vec<(f64, SquareMatrix, usize)> = perplexities
        .par_iter()
        .map(|&perp| {
            let cond = calibrate_conditionals(&d2, perp, PERPLEXITY_TOL, PERPLEXITY_MAX_ITER)?;
            Ok((perp, symmetrize(&cond.p), cond.unconverged.len()))
        })
        .collect::<Result<_, EmbeddingError>>()?;
    let joint_for = |perp: f64| {
        &joints
            .iter()
            .find(|(p, _, _)| p.total_cmp(&perp).is_eq())
            .expect("every grid perplexity was calibrated")
            .1
    };

    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|c| (0..runs_per_cell).map(move |r| (c, r)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(cell, run)| {
            let params = TsneParams {
                seed: grid[cell].seed.wrapping_add(run as u64),
                ..grid[cell].clone()
            };
            tsne_optimize(joint_for(params.perplexity), &params).map(|e| (cell, run, e))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let runs = results
        .iter()
        .map(|(cell, run, e)| RunSummary {
            cell: *cell,
            run: *run,
            perplexity: e.params.perplexity,
            learning_rate: e.params.learning_rate,
            seed: e.params.seed,
            final_kl: e.final_kl,
            gate: e.converged_gate,
        })
        .collect();
    let mut best_idx = 0;
    for (i, r) in results.iter().enumerate() {
        if r.2.final_kl < results[best_idx].2.final_kl {
            best_idx = i;
        }
    }
    let (best_cell, best_run, best) = results.into_iter().nth(best_idx).expect("non-empty grid");
    let calibration_misses = joints
        .iter()
        .filter(|(_, _, misses)| *misses > 0)
        .map(|(perp, _, misses)| (perp.to_string(), *misses))
        .collect();
    Ok(GridSearch {
        best,
        best_cell,
        best_run,
        runs,
        calibration_misses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sq_dists_of_unit_axes() {
        let d = pairwise_sq_dists_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(d.get(0, 1), 2.0);
        assert_eq!(d.get(1, 0), 2.0);
        assert_eq!(d.get(0, 2), 0.0);
        assert_eq!(d.get(1, 1), 0.0);
    }

    #[test]
    fn equidistant_points_give_uniform_rows() {
        let d = SquareMatrix::from_rows(&[vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]]).unwrap();
        let c = calibrate_conditionals(&d, 2.0, 1e-5, 50).unwrap();
        assert!(c.unconverged.is_empty());
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 0.0 } else { 0.5 };
                assert!((c.p.get(i, j) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unreachable_perplexity_is_flagged_not_fatal() {
        // Every row is uniform over the other two points whatever the precision.
        let d = SquareMatrix::from_rows(&[vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]]).unwrap();
        let c = calibrate_conditionals(&d, 1.5, 1e-5, 50).unwrap();
        assert_eq!(c.unconverged, vec![0, 1, 2]);
        assert!((c.p.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perplexity_bounds_are_checked() {
        let d = SquareMatrix::zeros(4);
        assert!(calibrate_conditionals(&d, 4.0, 1e-5, 50).is_err());
        assert!(calibrate_conditionals(&d, 1.0, 1e-5, 50).is_err());
    }

    #[test]
    fn symmetric_conditionals_only_scale() {
        let c = SquareMatrix::from_rows(&[vec![0.0, 0.5, 0.5], vec![0.5, 0.0, 0.5], vec![0.5, 0.5, 0.0]]).unwrap();
        let p = symmetrize(&c);
        for i in 0..3 {
            for j in 0..3 {
                assert!((p.get(i, j) - c.get(i, j) / 3.0).abs() < 1e-15);
            }
        }
        assert!((p.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_points_kl_is_zero_when_p_matches() {
        let p = SquareMatrix::from_rows(&[vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap();
        let kl = kl_divergence(&p, &[[0.3, -1.0], [2.0, 5.0]]).unwrap();
        assert!(kl.abs() < 1e-15);
    }

    #[test]
    fn two_point_optimization_converges() {
        let p = SquareMatrix::from_rows(&[vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap();
        let e = tsne_optimize(&p, &TsneParams::default()).unwrap();
        assert!(e.final_kl < 1e-6);
        assert_eq!(e.converged_gate, GateTier::Strict);
    }

    #[test]
    fn gate_tiers() {
        assert_eq!(GateTier::from_kl(0.49), GateTier::Strict);
        assert_eq!(GateTier::from_kl(0.5), GateTier::Loose);
        assert_eq!(GateTier::from_kl(0.99), GateTier::Loose);
        assert_eq!(GateTier::from_kl(1.0), GateTier::Failed);
    }

    #[test]
    fn params_validation() {
        let p = TsneParams {
            perplexity: 10.0,
            ..Default::default()
        };
        assert!(p.validate(11).is_ok());
        assert!(p.validate(10).is_err());
        assert!(TsneParams {
            n_iter: 100,
            ..p.clone()
        }
        .validate(50)
        .is_err());
        assert!(TsneParams {
            learning_rate: 0.0,
            ..p
        }
        .validate(50)
        .is_err());
    }

    #[test]
    fn empty_grid_is_rejected() {
        let t = FeatureTable::new(vec![vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        assert!(matches!(grid_search(&t, &[], 1), Err(EmbeddingError::EmptyGrid)));
    }
}
