use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::assign::Assignment;
use super::{PoolError, Result};
use crate::diff::{Tape, Tensor};
use crate::graph::Graph;
use crate::sparse::CsrMatrix;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReduceVariant {
    /// Supernode rows only.
    #[default]
    Plain,
    /// Sum of every cluster's rows.
    Expressive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnpoolMode {
    /// Every node copies its supernode's row.
    #[default]
    Broadcast,
    /// Supernodes get their row back, all other nodes get zeros.
    Padding,
}

impl FromStr for ReduceVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "plain" => Ok(Self::Plain),
            "expressive" => Ok(Self::Expressive),
            _ => Err(format!("unknown variant {s:?} (expected plain or expressive)")),
        }
    }
}

impl fmt::Display for ReduceVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Plain => "plain",
            Self::Expressive => "expressive",
        })
    }
}

impl FromStr for UnpoolMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "broadcast" => Ok(Self::Broadcast),
            "padding" => Ok(Self::Padding),
            _ => Err(format!("unknown unpool mode {s:?} (expected broadcast or padding)")),
        }
    }
}

impl fmt::Display for UnpoolMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Broadcast => "broadcast",
            Self::Padding => "padding",
        })
    }
}

/// Pooled K×F features. Row `k` is scaled by the score of supernode
/// `supernodes[k]`, which keeps the scores on the gradient path.
///
/// `assignment_t` is the K×N transpose of the assignment matrix and is only
/// read by the expressive variant.
pub fn reduce_features<S: Scalar>(
    tape: &mut Tape<S>,
    x: Tensor,
    scores: Tensor,
    supernodes: &[usize],
    assignment_t: Option<&Arc<CsrMatrix<S>>>,
    variant: ReduceVariant,
) -> Result<Tensor> {
    let (n, _) = tape.shape(x);
    if tape.shape(scores) != (n, 1) {
        return Err(PoolError::ShapeMismatch {
            op: "reduce_features",
            expected: (n, 1),
            got: tape.shape(scores),
        });
    }
    let pooled = match variant {
        ReduceVariant::Plain => tape.gather_rows(x, supernodes)?,
        ReduceVariant::Expressive => {
            let st = assignment_t.ok_or(PoolError::MissingAssignment)?;
            if st.shape() != (supernodes.len(), n) {
                return Err(PoolError::ShapeMismatch {
                    op: "reduce_features",
                    expected: (supernodes.len(), n),
                    got: st.shape(),
                });
            }
            tape.spmm(st, x)?
        }
    };
    let s_sel = tape.gather_rows(scores, supernodes)?;
    Ok(tape.row_scale(pooled, s_sel)?)
}

/// `Sᵀ A S`, optionally without its diagonal. Entry `(a, b)` is the total
/// weight of original edges running from cluster `a` to cluster `b`; the
/// result is exactly symmetric.
pub fn connect<S: Scalar>(g: &Graph<S>, assignment: &Assignment, remove_self_loops: bool) -> CsrMatrix<S> {
    let clusters = &assignment.clusters;
    let mut pairs: Vec<((usize, usize), S)> = Vec::with_capacity(g.num_undirected_edges());
    for (i, j, w) in g.undirected_edges() {
        let (a, b) = (clusters[i], clusters[j]);
        if a == b {
            if !remove_self_loops {
                // both orientations of the edge land on the diagonal
                pairs.push(((a, a), w + w));
            }
        } else {
            pairs.push(((a.min(b), a.max(b)), w));
        }
    }
    pairs.sort_by_key(|&(key, _)| key);
    let mut triplets = Vec::with_capacity(2 * pairs.len());
    let mut iter = pairs.into_iter().peekable();
    while let Some((key, mut w)) = iter.next() {
        while let Some(&(next, v)) = iter.peek() {
            if next != key {
                break;
            }
            w += v;
            iter.next();
        }
        triplets.push((key.0, key.1, w));
        if key.0 != key.1 {
            triplets.push((key.1, key.0, w));
        }
    }
    let k = assignment.k();
    CsrMatrix::from_triplets(k, k, triplets)
}

/// Lifts K×F pooled features back to the N original nodes.
pub fn unpool<S: Scalar>(
    tape: &mut Tape<S>,
    pooled: Tensor,
    assignment: &Assignment,
    mode: UnpoolMode,
) -> Result<Tensor> {
    let (rows, _) = tape.shape(pooled);
    if rows != assignment.k() {
        return Err(PoolError::ShapeMismatch {
            op: "unpool",
            expected: (assignment.k(), tape.shape(pooled).1),
            got: tape.shape(pooled),
        });
    }
    let m = match mode {
        UnpoolMode::Broadcast => assignment.matrix(),
        UnpoolMode::Padding => assignment.padding_matrix(),
    };
    Ok(tape.spmm(&Arc::new(m), pooled)?)
}
