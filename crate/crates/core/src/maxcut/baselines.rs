use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::objective::{cut_metrics, CutAssignment, CutResult};
use super::{CutError, Result};
use crate::graph::Graph;
use crate::Scalar;

/// Largest graph accepted by [`brute_force_maxcut`].
pub const BRUTE_FORCE_MAX_NODES: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevsConfig {
    /// Stop once successive Rayleigh quotients differ by less than this.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for LevsConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevsResult {
    pub cut: CutResult,
    /// False when `max_iters` ran out; `cut` then comes from the last iterate.
    pub converged: bool,
    pub iterations: usize,
    /// Rayleigh quotient of the final iterate.
    pub eigenvalue: f64,
}

/// Partitions by the sign pattern of the dominant eigenvector of the
/// unnormalized Laplacian, found by power iteration from a seeded random
/// start. Nodes with a non-negative component go to the `+1` side.
pub fn levs_partition<S: Scalar>(g: &Graph<S>, config: LevsConfig, seed: u64) -> Result<LevsResult> {
    let laplacian = g.laplacian();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..g.n()).map(|_| StandardNormal.sample(&mut rng)).collect();
    normalize(&mut x);
    let to_f64: Vec<f64> = laplacian.values().iter().map(|v| v.as_f64()).collect();
    let apply = |v: &[f64]| -> Vec<f64> {
        (0..laplacian.rows())
            .map(|r| {
                let span = laplacian.indptr()[r]..laplacian.indptr()[r + 1];
                laplacian.indices()[span.clone()]
                    .iter()
                    .zip(&to_f64[span])
                    .map(|(&c, &w)| w * v[c])
                    .sum()
            })
            .collect()
    };

    let mut previous = f64::NAN;
    let mut converged = false;
    let mut iterations = 0;
    let mut eigenvalue = 0.0;
    while iterations < config.max_iters {
        iterations += 1;
        let mut y = apply(&x);
        eigenvalue = dot(&x, &y);
        if normalize(&mut y) == 0.0 {
            // x lies in the null space; every edge weight is zero
            converged = true;
            break;
        }
        x = y;
        if (eigenvalue - previous).abs() < config.tol {
            converged = true;
            break;
        }
        previous = eigenvalue;
    }
    let z = CutAssignment::from_sides(x.iter().map(|&v| v >= 0.0));
    Ok(LevsResult {
        cut: cut_metrics(g, &z)?,
        converged,
        iterations,
        eigenvalue,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GwConfig {
    /// Columns of the low-rank factor; `None` picks `ceil(sqrt(2N))`.
    pub rank: Option<usize>,
    pub ascent_iters: usize,
    /// Step size relative to the largest weighted degree.
    pub step_scale: f64,
    pub rounding_trials: usize,
}

impl Default for GwConfig {
    fn default() -> Self {
        Self {
            rank: None,
            ascent_iters: 500,
            step_scale: 0.05,
            rounding_trials: 64,
        }
    }
}

impl GwConfig {
    pub fn rank_for(&self, n: usize) -> usize {
        self.rank
            .unwrap_or_else(|| ((2 * n) as f64).sqrt().ceil() as usize)
            .max(2)
    }
}

/// Low-rank surrogate of the semidefinite relaxation followed by random
/// hyperplane rounding.
///
/// Rows of `X` (N×rank) live on the unit sphere. Projected gradient ascent
/// on `Σ_ij w_ij (1 - x_i·x_j)` takes a gradient step and renormalizes each
/// row; the best of `rounding_trials` hyperplane roundings is returned.
pub fn gw_partition<S: Scalar>(g: &Graph<S>, config: GwConfig, seed: u64) -> Result<CutResult> {
    let n = g.n();
    let rank = config.rank_for(n);
    if config.rank.is_some_and(|r| r < 2) {
        return Err(CutError::InvalidConfig("rank must be at least 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::<f64>::from_shape_simple_fn((n, rank), || StandardNormal.sample(&mut rng));
    for mut row in x.rows_mut() {
        let norm = row.dot(&row).sqrt();
        row /= norm;
    }
    let adjacency = g.adjacency();
    let max_degree = g.weighted_degrees().into_iter().map(|d| d.as_f64()).fold(0.0, f64::max);
    if max_degree > 0.0 {
        let step = config.step_scale / max_degree;
        for _ in 0..config.ascent_iters {
            let mut ax = Array2::<f64>::zeros((n, rank));
            for (i, mut out) in ax.rows_mut().into_iter().enumerate() {
                for (j, w) in adjacency.row(i) {
                    out.scaled_add(w.as_f64(), &x.row(j));
                }
            }
            for (mut row, grad) in x.rows_mut().into_iter().zip(ax.rows()) {
                let mut candidate = row.to_owned();
                candidate.scaled_add(-2.0 * step, &grad);
                let norm = candidate.dot(&candidate).sqrt();
                if norm > 0.0 {
                    row.assign(&(candidate / norm));
                }
            }
        }
    }

    let mut best: Option<CutResult> = None;
    for _ in 0..config.rounding_trials.max(1) {
        let normal: Vec<f64> = (0..rank).map(|_| StandardNormal.sample(&mut rng)).collect();
        let z = CutAssignment::from_sides(
            x.rows()
                .into_iter()
                .map(|row| row.iter().zip(&normal).map(|(a, b)| a * b).sum::<f64>() >= 0.0),
        );
        let result = cut_metrics(g, &z)?;
        if best.as_ref().is_none_or(|b| result.cut_value > b.cut_value) {
            best = Some(result);
        }
    }
    Ok(best.expect("at least one rounding trial"))
}

/// Exact MAXCUT by enumerating the `2^(n-1)` assignments with `z_0 = +1`.
/// Among optimal assignments the lexicographically smallest (`-1 < +1`) is
/// returned.
pub fn brute_force_maxcut<S: Scalar>(g: &Graph<S>) -> Result<CutResult> {
    let n = g.n();
    if n > BRUTE_FORCE_MAX_NODES {
        return Err(CutError::TooLarge {
            n,
            max: BRUTE_FORCE_MAX_NODES,
        });
    }
    if n == 0 {
        return cut_metrics(g, &CutAssignment::new(Vec::new())?);
    }
    let neighbors: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| g.neighbors(i).map(|(j, w)| (j, w.as_f64())).collect())
        .collect();
    let total: f64 = g.undirected_edges().map(|(_, _, w)| w.as_f64()).sum();
    let tol = 1e-9 * total.max(1.0);

    // Gray-code walk: consecutive patterns differ in one node.
    let mut z = vec![1i8; n];
    let mut cut = 0.0;
    let mut best_cut = 0.0;
    let mut best_z = z.clone();
    let patterns: u64 = 1 << (n - 1);
    for step in 1..patterns {
        let v = step.trailing_zeros() as usize + 1;
        let delta: f64 = neighbors[v]
            .iter()
            .map(|&(u, w)| if z[u] == z[v] { w } else { -w })
            .sum();
        z[v] = -z[v];
        cut += delta;
        if cut > best_cut + tol {
            best_cut = cut;
            best_z.copy_from_slice(&z);
        } else if (cut - best_cut).abs() <= tol && z < best_z {
            best_z.copy_from_slice(&z);
        }
    }
    cut_metrics(g, &CutAssignment::new(best_z)?)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}
