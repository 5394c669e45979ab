use super::{check_offsets, PoolError, Result};
use crate::Scalar;

/// Supernodes chosen by top-K, in ascending node order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub indices: Vec<usize>,
    /// Boundaries of each graph's supernodes inside `indices`.
    pub offsets: Vec<usize>,
}

impl Selection {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// `max(1, floor(ratio * n))`, never more than `n`.
pub fn pool_size(n: usize, ratio: f64) -> Result<usize> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(PoolError::InvalidRatio(ratio));
    }
    // the small slack keeps e.g. 0.3 * 10 from flooring to 2
    let k = (ratio * n as f64 + 1e-9).floor() as usize;
    Ok(k.clamp(1, n.max(1)))
}

/// Indices of the K highest scores, ties to the lowest index, returned in
/// ascending order.
pub fn select_topk<S: Scalar>(scores: &[S], ratio: f64) -> Result<Selection> {
    select_topk_segmented(scores, &[0, scores.len()], ratio)
}

/// Top-K applied to every segment `offsets[b]..offsets[b+1]` separately.
pub fn select_topk_segmented<S: Scalar>(scores: &[S], offsets: &[usize], ratio: f64) -> Result<Selection> {
    check_offsets(offsets, scores.len())?;
    let mut indices = Vec::new();
    let mut out_offsets = vec![0];
    for w in offsets.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi > lo {
            let k = pool_size(hi - lo, ratio)?;
            let mut order: Vec<usize> = (lo..hi).collect();
            order.sort_by(|&a, &b| {
                scores[b]
                    .partial_cmp(&scores[a])
                    .expect("finite scores")
                    .then(a.cmp(&b))
            });
            let mut chosen = order[..k].to_vec();
            chosen.sort_unstable();
            indices.extend(chosen);
        } else {
            pool_size(1, ratio)?;
        }
        out_offsets.push(indices.len());
    }
    Ok(Selection {
        indices,
        offsets: out_offsets,
    })
}
