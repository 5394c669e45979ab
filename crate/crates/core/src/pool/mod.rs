//! MaxCutPool decomposed into selection, assignment, reduction, and
//! connection, plus unpooling.

mod assign;
mod layer;
mod ops;
mod select;

pub use assign::{assign_supernodes, assign_supernodes_segmented, Assignment};
pub use layer::{maxcutpool, GraphBatch, MaxCutPool, PoolConfig, PoolOutput, PoolPlan, PooledGraph};
pub use ops::{connect, reduce_features, unpool, ReduceVariant, UnpoolMode};
pub use select::{pool_size, select_topk, select_topk_segmented, Selection};

use thiserror::Error;

use crate::diff::DiffError;
use crate::graph::GraphError;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("pooling ratio must lie in (0, 1], got {0}")]
    InvalidRatio(f64),
    #[error("invalid supernode {node}: {reason}")]
    InvalidSupernode { node: usize, reason: &'static str },
    #[error("supernode set is empty")]
    NoSupernodes,
    #[error("shape mismatch in {op}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("expressive reduction needs the assignment matrix")]
    MissingAssignment,
    #[error("invalid segment offsets: {0}")]
    InvalidSegments(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

pub type Result<T, E = PoolError> = std::result::Result<T, E>;

/// Validates `offsets` as segment boundaries over `n` items: starts at 0,
/// ends at `n`, non-decreasing.
pub(crate) fn check_offsets(offsets: &[usize], n: usize) -> Result<()> {
    let ok = offsets.first() == Some(&0) && offsets.last() == Some(&n) && offsets.windows(2).all(|w| w[0] <= w[1]);
    if ok {
        Ok(())
    } else {
        Err(PoolError::InvalidSegments(format!("{offsets:?} over {n} items")))
    }
}
