use std::collections::VecDeque;

use super::{Dataset, Graph, GraphError, Result};
use crate::maxcut::CutAssignment;
use crate::Scalar;

/// Absolute dataset-level mean of per-graph average cosine similarity
/// between feature rows of adjacent nodes (ordered edge pairs).
///
/// Edgeless graphs have no defined per-graph average and are left out of
/// both the sum and the graph count.
pub fn feature_homophily<S: Scalar>(d: &Dataset<S>) -> Result<S> {
    let mut total = S::zero();
    let mut counted = 0usize;
    for (gi, g) in d.graphs.iter().enumerate() {
        let x = g.features().ok_or(GraphError::MissingFeatures(gi))?;
        let norms: Vec<S> = x.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
        let mut sum = S::zero();
        let mut pairs = 0usize;
        for i in 0..g.n() {
            for (j, _) in g.neighbors(i) {
                for node in [i, j] {
                    if norms[node] == S::zero() {
                        return Err(GraphError::ZeroNormFeature { graph: gi, node });
                    }
                }
                sum += x.row(i).dot(&x.row(j)) / (norms[i] * norms[j]);
                pairs += 1;
            }
        }
        if pairs > 0 {
            total += sum / S::of_usize(pairs);
            counted += 1;
        }
    }
    if counted == 0 {
        return Ok(S::zero());
    }
    Ok((total / S::of_usize(counted)).abs())
}

/// Two-coloring that cuts every edge, if the graph is bipartite.
///
/// Components are colored by BFS from their lowest node id, which gets `+1`.
pub fn bipartition_oracle<S: Scalar>(g: &Graph<S>) -> Option<CutAssignment> {
    let n = g.n();
    let mut side = vec![0i8; n];
    let mut queue = VecDeque::new();
    for start in 0..n {
        if side[start] != 0 {
            continue;
        }
        side[start] = 1;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            for (v, _) in g.neighbors(u) {
                if side[v] == 0 {
                    side[v] = -side[u];
                    queue.push_back(v);
                } else if side[v] == side[u] {
                    return None;
                }
            }
        }
    }
    Some(CutAssignment::new(side).expect("BFS coloring is ±1"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate, GeneratorSpec};
    use crate::maxcut::cut_metrics;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn k2_dataset(x: ndarray::Array2<f64>) -> Dataset<f64> {
        let g = Graph::build(2, &[(0, 1, 1.0)], Some(x), None).unwrap();
        Dataset::new(vec![g], vec![0], 1).unwrap()
    }

    #[test]
    fn homophily_of_k2() {
        let h = |x| feature_homophily(&k2_dataset(x)).unwrap();
        assert_abs_diff_eq!(h(array![[1.0, 2.0], [1.0, 2.0]]), 1.0, epsilon = 1e-12);
        assert_eq!(h(array![[1.0, 0.0], [0.0, 3.0]]), 0.0);
        assert_abs_diff_eq!(h(array![[1.0, 2.0], [-1.0, -2.0]]), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn homophily_errors() {
        let g = Graph::<f64>::build(2, &[(0, 1, 1.0)], None, None).unwrap();
        let d = Dataset::new(vec![g], vec![0], 1).unwrap();
        assert!(matches!(feature_homophily(&d), Err(GraphError::MissingFeatures(0))));
        assert!(matches!(
            feature_homophily(&k2_dataset(array![[0.0, 0.0], [1.0, 0.0]])),
            Err(GraphError::ZeroNormFeature { graph: 0, node: 0 })
        ));
    }

    #[test]
    fn oracle_on_even_ring_and_triangle() {
        let ring: Graph<f64> = generate(GeneratorSpec::Ring { n: 4 }, 0).unwrap();
        let z = bipartition_oracle(&ring).unwrap();
        assert_eq!(cut_metrics(&ring, &z).unwrap().cut_value, 4.0);
        let tri: Graph<f64> = generate(GeneratorSpec::Complete { n: 3 }, 0).unwrap();
        assert!(bipartition_oracle(&tri).is_none());
    }

    #[test]
    fn oracle_on_grid_is_checkerboard() {
        let grid: Graph<f64> = generate(GeneratorSpec::Grid2d { rows: 3, cols: 3 }, 0).unwrap();
        let z = bipartition_oracle(&grid).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                let expected = if (r + c) % 2 == 0 { 1 } else { -1 };
                assert_eq!(z.signs()[r * 3 + c], expected);
            }
        }
        let res = cut_metrics(&grid, &z).unwrap();
        assert_eq!(res.cut_value, 12.0);
        assert_eq!(res.cut_fraction, 1.0);
    }
}
