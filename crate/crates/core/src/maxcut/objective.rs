use std::sync::Arc;

use serde::Serialize;

use super::{CutError, Result};
use crate::diff::{Tape, Tensor};
use crate::graph::Graph;
use crate::sparse::CsrMatrix;
use crate::Scalar;

/// Side of every node in a two-way partition, stored as `±1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct CutAssignment(Vec<i8>);

impl CutAssignment {
    pub fn new(signs: Vec<i8>) -> Result<Self> {
        if let Some(pos) = signs.iter().position(|&z| z != 1 && z != -1) {
            return Err(CutError::InvalidAssignment(pos));
        }
        Ok(Self(signs))
    }

    /// Assignment from booleans: `true` maps to `+1`.
    pub fn from_sides(sides: impl IntoIterator<Item = bool>) -> Self {
        Self(sides.into_iter().map(|b| if b { 1 } else { -1 }).collect())
    }

    pub fn signs(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Flips every side; the cut is unchanged.
    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|&z| -z).collect())
    }

    pub fn as_scalars<S: Scalar>(&self) -> Vec<S> {
        self.0
            .iter()
            .map(|&z| if z > 0 { S::one() } else { -S::one() })
            .collect()
    }
}

/// Evaluated partition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutResult {
    pub assignment: CutAssignment,
    /// Weight of cut edges, each undirected edge counted once.
    pub cut_value: f64,
    /// `cut_value` over the undirected total weight; 0 on edgeless graphs.
    pub cut_fraction: f64,
    /// Auxiliary loss at the ±1 assignment, `1 - 2 * cut_fraction`.
    pub loss_value: f64,
}

/// Thresholds scores at zero: `+1` if `s_i > 0`, `-1` otherwise.
pub fn round_scores<S: Scalar>(scores: &[S]) -> CutAssignment {
    CutAssignment::from_sides(scores.iter().map(|&s| s > S::zero()))
}

pub fn cut_metrics<S: Scalar>(g: &Graph<S>, z: &CutAssignment) -> Result<CutResult> {
    if z.len() != g.n() {
        return Err(CutError::LengthMismatch {
            expected: g.n(),
            got: z.len(),
        });
    }
    let signs = z.signs();
    let mut cut = S::zero();
    let mut total = S::zero();
    for (u, v, w) in g.undirected_edges() {
        total += w;
        if signs[u] != signs[v] {
            cut += w;
        }
    }
    let (cut, total) = (cut.as_f64(), total.as_f64());
    let fraction = if total > 0.0 { cut / total } else { 0.0 };
    Ok(CutResult {
        assignment: z.clone(),
        cut_value: cut,
        cut_fraction: fraction,
        loss_value: 1.0 - 2.0 * fraction,
    })
}

/// `sᵀ A s / |E|` evaluated directly, with `|E|` over ordered pairs.
pub fn cut_loss_value<S: Scalar>(g: &Graph<S>, scores: &[S]) -> Result<S> {
    if scores.len() != g.n() {
        return Err(CutError::LengthMismatch {
            expected: g.n(),
            got: scores.len(),
        });
    }
    let total = g.total_edge_weight();
    if total <= S::zero() {
        return Err(CutError::EmptyGraph);
    }
    let mut quad = S::zero();
    for i in 0..g.n() {
        for (j, w) in g.neighbors(i) {
            quad += scores[i] * w * scores[j];
        }
    }
    Ok(quad / total)
}

/// Differentiable auxiliary loss `sᵀ A s / |E|` for an N×1 score tensor.
pub fn cut_loss<S: Scalar>(tape: &mut Tape<S>, scores: Tensor, adjacency: &Arc<CsrMatrix<S>>) -> Result<Tensor> {
    let total = adjacency.sum();
    if total <= S::zero() {
        return Err(CutError::EmptyGraph);
    }
    let quad = tape.quadratic_form(scores, adjacency)?;
    Ok(tape.scale(quad, total.recip())?)
}
