use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_offsets, PoolError, Result};
use crate::graph::Graph;
use crate::sparse::CsrMatrix;
use crate::Scalar;

/// Hard node-to-supernode map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    /// Column of the supernode each node belongs to.
    pub clusters: Vec<usize>,
    /// BFS distance to the assigned supernode; `None` for random fallbacks.
    pub hops: Vec<Option<usize>>,
    /// Node id of the supernode behind each column.
    pub supernodes: Vec<usize>,
    pub random_fallback_count: usize,
}

impl Assignment {
    pub fn n(&self) -> usize {
        self.clusters.len()
    }

    pub fn k(&self) -> usize {
        self.supernodes.len()
    }

    /// Binary N×K matrix `S` with `S[i, clusters[i]] = 1`.
    pub fn matrix<S: Scalar>(&self) -> CsrMatrix<S> {
        let n = self.n();
        CsrMatrix::from_raw(n, self.k(), (0..=n).collect(), self.clusters.clone(), vec![S::one(); n])
    }

    /// N×K matrix with a single 1 per column, on the supernode's own row.
    pub fn padding_matrix<S: Scalar>(&self) -> CsrMatrix<S> {
        let triplets = self
            .supernodes
            .iter()
            .enumerate()
            .map(|(k, &i)| (i, k, S::one()))
            .collect();
        CsrMatrix::from_triplets(self.n(), self.k(), triplets)
    }
}

/// Assigns every node to the supernode reached first by a multi-source BFS
/// of at most `max_iter` rounds.
///
/// In each round an unassigned node sums, per supernode, the weights of
/// edges to neighbors assigned in the previous round and takes the largest
/// sum (ties to the lowest column). Nodes still unassigned after
/// `max_iter` rounds get a uniformly random supernode.
pub fn assign_supernodes<S: Scalar>(
    g: &Graph<S>,
    supernodes: &[usize],
    max_iter: usize,
    seed: u64,
) -> Result<Assignment> {
    assign_supernodes_segmented(g, supernodes, &[0, g.n()], max_iter, seed)
}

/// Like [`assign_supernodes`] on a disjoint union whose components occupy
/// `offsets[b]..offsets[b+1]`; random fallbacks stay inside the node's own
/// segment.
pub fn assign_supernodes_segmented<S: Scalar>(
    g: &Graph<S>,
    supernodes: &[usize],
    offsets: &[usize],
    max_iter: usize,
    seed: u64,
) -> Result<Assignment> {
    let n = g.n();
    check_offsets(offsets, n)?;
    if supernodes.is_empty() {
        return Err(PoolError::NoSupernodes);
    }
    let mut clusters = vec![usize::MAX; n];
    let mut hops = vec![None; n];
    for (k, &node) in supernodes.iter().enumerate() {
        if node >= n {
            return Err(PoolError::InvalidSupernode {
                node,
                reason: "out of range",
            });
        }
        if clusters[node] != usize::MAX {
            return Err(PoolError::InvalidSupernode {
                node,
                reason: "listed twice",
            });
        }
        clusters[node] = k;
        hops[node] = Some(0);
    }

    let mut frontier: Vec<usize> = supernodes.to_vec();
    let mut votes: Vec<Vec<(usize, S)>> = vec![Vec::new(); n];
    for round in 1..=max_iter {
        if frontier.is_empty() {
            break;
        }
        let mut touched = Vec::new();
        for &u in &frontier {
            let k = clusters[u];
            for (v, w) in g.neighbors(u) {
                if clusters[v] != usize::MAX {
                    continue;
                }
                let tally = &mut votes[v];
                if tally.is_empty() {
                    touched.push(v);
                }
                match tally.iter_mut().find(|(c, _)| *c == k) {
                    Some((_, acc)) => *acc += w,
                    None => tally.push((k, w)),
                }
            }
        }
        for &v in &touched {
            let best = votes[v]
                .iter()
                .fold(None::<(usize, S)>, |best, &(c, w)| match best {
                    Some((bc, bw)) if bw > w || (bw == w && bc < c) => Some((bc, bw)),
                    _ => Some((c, w)),
                })
                .map(|(c, _)| c)
                .expect("touched nodes have votes");
            clusters[v] = best;
            hops[v] = Some(round);
            votes[v].clear();
        }
        frontier = touched;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fallback = 0;
    let mut columns_by_segment: Vec<Vec<usize>> = vec![Vec::new(); offsets.len() - 1];
    for (k, &node) in supernodes.iter().enumerate() {
        let segment = offsets.partition_point(|&o| o <= node) - 1;
        columns_by_segment[segment].push(k);
    }
    for w in offsets.windows(2).enumerate() {
        let (segment, bounds) = w;
        for i in bounds[0]..bounds[1] {
            if clusters[i] != usize::MAX {
                continue;
            }
            let columns = &columns_by_segment[segment];
            if columns.is_empty() {
                return Err(PoolError::InvalidSegments(format!(
                    "segment {segment} has no supernode"
                )));
            }
            clusters[i] = columns[rng.random_range(0..columns.len())];
            fallback += 1;
        }
    }

    Ok(Assignment {
        clusters,
        hops,
        supernodes: supernodes.to_vec(),
        random_fallback_count: fallback,
    })
}
