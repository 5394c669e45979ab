//! Sparse weighted undirected graphs, generators, file formats, and
//! graph-level metrics.

mod generators;
mod gset;
mod metrics;
mod multipartite;

pub use generators::{generate, two_community, GeneratorSpec, TwoCommunityParams};
pub use gset::{parse_gset, write_gset};
pub use metrics::{bipartition_oracle, feature_homophily};
pub use multipartite::{
    generate_multipartite_dataset, read_dataset_jsonl, write_dataset_jsonl, Dataset, DatasetHeader, MultipartiteGraphs,
    MultipartiteParams,
};

use ndarray::Array2;
use thiserror::Error;

use crate::sparse::CsrMatrix;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("node index out of range: edge ({u}, {v}) in a graph with {n} nodes")]
    IndexOutOfRange { u: usize, v: usize, n: usize },
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("negative weight {w} on edge ({u}, {v})")]
    NegativeWeight { u: usize, v: usize, w: f64 },
    #[error("non-finite weight on edge ({u}, {v})")]
    NonFiniteWeight { u: usize, v: usize },
    #[error("duplicate edge ({u}, {v})")]
    DuplicateEdge { u: usize, v: usize },
    #[error("adjacency is not symmetric at ({u}, {v})")]
    Asymmetric { u: usize, v: usize },
    #[error("feature matrix has {rows} rows for {n} nodes")]
    FeatureRows { rows: usize, n: usize },
    #[error("label vector has {len} entries for {n} nodes")]
    LabelCount { len: usize, n: usize },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("malformed edge line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("header declares {declared} edges but {found} were read")]
    EdgeCountMismatch { declared: usize, found: usize },
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("graph {0} has no node features")]
    MissingFeatures(usize),
    #[error("node {node} of graph {graph} has a zero-norm feature row")]
    ZeroNormFeature { graph: usize, node: usize },
    #[error("malformed dataset: {0}")]
    MalformedDataset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = GraphError> = std::result::Result<T, E>;

/// Immutable undirected graph stored as a symmetric CSR adjacency.
///
/// Every undirected edge appears twice, once per direction. Neighbor lists
/// are sorted, weights are finite and non-negative, and there are no
/// self-loops.
#[derive(Debug, Clone)]
pub struct Graph<S> {
    adjacency: CsrMatrix<S>,
    features: Option<Array2<S>>,
    labels: Option<Vec<usize>>,
}

impl<S: Scalar> Graph<S> {
    /// Builds a graph from an undirected edge list; each pair is listed once.
    pub fn build(
        n: usize,
        edges: &[(usize, usize, S)],
        features: Option<Array2<S>>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let mut triplets = Vec::with_capacity(2 * edges.len());
        for &(u, v, w) in edges {
            if u >= n || v >= n {
                return Err(GraphError::IndexOutOfRange { u, v, n });
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            check_weight(u, v, w)?;
            triplets.push((u, v, w));
            triplets.push((v, u, w));
        }
        triplets.sort_unstable_by_key(|t| (t.0, t.1));
        if let Some(pair) = triplets.windows(2).find(|p| p[0].0 == p[1].0 && p[0].1 == p[1].1) {
            let (u, v) = (pair[0].0.min(pair[0].1), pair[0].0.max(pair[0].1));
            return Err(GraphError::DuplicateEdge { u, v });
        }
        let adjacency = CsrMatrix::from_triplets(n, n, triplets);
        Self::from_adjacency(adjacency)?.with_attributes(features, labels)
    }

    /// Wraps an existing adjacency after validating the graph invariants.
    pub fn from_adjacency(adjacency: CsrMatrix<S>) -> Result<Self> {
        let n = adjacency.rows();
        if adjacency.cols() != n {
            return Err(GraphError::InvalidParams(format!(
                "adjacency is {}x{}",
                n,
                adjacency.cols()
            )));
        }
        for u in 0..n {
            for (v, w) in adjacency.row(u) {
                if u == v {
                    return Err(GraphError::SelfLoop(u));
                }
                check_weight(u, v, w)?;
                if adjacency.get(v, u) != w {
                    return Err(GraphError::Asymmetric { u, v });
                }
            }
        }
        Ok(Self {
            adjacency,
            features: None,
            labels: None,
        })
    }

    /// Replaces node features and labels, checking their sizes.
    pub fn with_attributes(mut self, features: Option<Array2<S>>, labels: Option<Vec<usize>>) -> Result<Self> {
        let n = self.n();
        if let Some(x) = &features {
            if x.nrows() != n {
                return Err(GraphError::FeatureRows { rows: x.nrows(), n });
            }
        }
        if let Some(y) = &labels {
            if y.len() != n {
                return Err(GraphError::LabelCount { len: y.len(), n });
            }
        }
        self.features = features;
        self.labels = labels;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn adjacency(&self) -> &CsrMatrix<S> {
        &self.adjacency
    }

    pub fn features(&self) -> Option<&Array2<S>> {
        self.features.as_ref()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// `(neighbor, weight)` pairs of node `i`, ascending by neighbor id.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, S)> + '_ {
        self.adjacency.row(i)
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency.indptr()[i + 1] - self.adjacency.indptr()[i]
    }

    /// Weighted degree of every node.
    pub fn weighted_degrees(&self) -> Vec<S> {
        (0..self.n()).map(|i| self.neighbors(i).map(|(_, w)| w).sum()).collect()
    }

    /// Each undirected edge once as `(u, v, w)` with `u < v`.
    pub fn undirected_edges(&self) -> impl Iterator<Item = (usize, usize, S)> + '_ {
        (0..self.n()).flat_map(move |u| {
            self.neighbors(u)
                .filter(move |&(v, _)| u < v)
                .map(move |(v, w)| (u, v, w))
        })
    }

    pub fn num_undirected_edges(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    /// Sum of `w_ij` over ordered pairs, i.e. twice the undirected total.
    pub fn total_edge_weight(&self) -> S {
        self.adjacency.sum()
    }

    /// Symmetrically normalized Laplacian `I - D^{-1/2} A D^{-1/2}`.
    ///
    /// Rows of isolated nodes are identity rows.
    pub fn sym_norm_laplacian(&self) -> CsrMatrix<S> {
        self.normalized_operator(S::one(), -S::one(), S::one())
    }

    /// Propagation operator `I - delta * L_sym`.
    ///
    /// Isolated nodes keep an identity row: without neighbors there is
    /// nothing to propagate, so the layer acts as a per-node linear map.
    pub fn propagation(&self, delta: S) -> CsrMatrix<S> {
        self.normalized_operator(S::one() - delta, delta, S::one())
    }

    /// Builds `diag_connected * I + adj_scale * D^{-1/2} A D^{-1/2}` with
    /// `diag_isolated` on degree-zero rows.
    fn normalized_operator(&self, diag_connected: S, adj_scale: S, diag_isolated: S) -> CsrMatrix<S> {
        let n = self.n();
        let inv_sqrt: Vec<S> = self
            .weighted_degrees()
            .into_iter()
            .map(|d| if d > S::zero() { d.sqrt().recip() } else { S::zero() })
            .collect();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::with_capacity(self.adjacency.nnz() + n);
        let mut values = Vec::with_capacity(self.adjacency.nnz() + n);
        indptr.push(0);
        for i in 0..n {
            let isolated = self.degree(i) == 0;
            let diag = if isolated { diag_isolated } else { diag_connected };
            let mut diag_pending = true;
            for (j, w) in self.neighbors(i) {
                if diag_pending && j > i {
                    indices.push(i);
                    values.push(diag);
                    diag_pending = false;
                }
                indices.push(j);
                values.push(adj_scale * w * inv_sqrt[i] * inv_sqrt[j]);
            }
            if diag_pending {
                indices.push(i);
                values.push(diag);
            }
            indptr.push(indices.len());
        }
        CsrMatrix::from_raw(n, n, indptr, indices, values)
    }

    /// Unnormalized Laplacian `D - A`.
    pub fn laplacian(&self) -> CsrMatrix<S> {
        let degrees = self.weighted_degrees();
        let mut triplets: Vec<(usize, usize, S)> = degrees.iter().enumerate().map(|(i, &d)| (i, i, d)).collect();
        for u in 0..self.n() {
            for (v, w) in self.neighbors(u) {
                triplets.push((u, v, -w));
            }
        }
        CsrMatrix::from_triplets(self.n(), self.n(), triplets)
    }

    /// Whether a two-coloring cutting every edge exists.
    pub fn is_bipartite(&self) -> bool {
        bipartition_oracle(self).is_some()
    }

    /// Disjoint union of graphs; node ids of graph `g` are offset by the
    /// sizes of the graphs before it. Features are concatenated when every
    /// input has them with a common width.
    pub fn disjoint_union<'a>(graphs: impl IntoIterator<Item = &'a Graph<S>>) -> (Self, Vec<usize>) {
        let graphs: Vec<&Graph<S>> = graphs.into_iter().collect();
        let mut offsets = Vec::with_capacity(graphs.len() + 1);
        offsets.push(0);
        for g in &graphs {
            offsets.push(offsets.last().unwrap() + g.n());
        }
        let n = *offsets.last().unwrap();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for (g, &off) in graphs.iter().zip(&offsets) {
            for i in 0..g.n() {
                for (j, w) in g.neighbors(i) {
                    indices.push(j + off);
                    values.push(w);
                }
                indptr.push(indices.len());
            }
        }
        let adjacency = CsrMatrix::from_raw(n, n, indptr, indices, values);
        let width = graphs.first().and_then(|g| g.features()).map(|x| x.ncols());
        let features = width.and_then(|f| {
            let mut x = Array2::zeros((n, f));
            for (g, &off) in graphs.iter().zip(&offsets) {
                let gx = g.features().filter(|gx| gx.ncols() == f)?;
                x.slice_mut(ndarray::s![off..off + g.n(), ..]).assign(gx);
            }
            Some(x)
        });
        let labels = graphs
            .iter()
            .map(|g| g.labels())
            .collect::<Option<Vec<_>>>()
            .map(|ls| ls.concat());
        let union = Self {
            adjacency,
            features,
            labels,
        };
        (union, offsets)
    }
}

fn check_weight<S: Scalar>(u: usize, v: usize, w: S) -> Result<()> {
    if !w.is_finite() {
        return Err(GraphError::NonFiniteWeight { u, v });
    }
    if w < S::zero() {
        return Err(GraphError::NegativeWeight { u, v, w: w.as_f64() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit(edges: &[(usize, usize)], n: usize) -> Graph<f64> {
        let e: Vec<_> = edges.iter().map(|&(u, v)| (u, v, 1.0)).collect();
        Graph::build(n, &e, None, None).unwrap()
    }

    #[test]
    fn single_edge() {
        let g = unit(&[(0, 1)], 2);
        assert_eq!((g.degree(0), g.degree(1)), (1, 1));
        assert_eq!(g.total_edge_weight(), 2.0);
    }

    #[test]
    fn path_degrees_and_weight() {
        let g = unit(&[(0, 1), (1, 2)], 3);
        let degrees: Vec<_> = (0..3).map(|i| g.degree(i)).collect();
        assert_eq!(degrees, vec![1, 2, 1]);
        assert_eq!(g.total_edge_weight(), 4.0);
    }

    #[test]
    fn triangle_weight_double_counted() {
        let g = Graph::build(3, &[(0, 1, 1.0), (1, 2, 2.0), (0, 2, 3.0)], None, None).unwrap();
        assert_eq!(g.total_edge_weight(), 12.0);
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(matches!(
            Graph::build(1, &[(0, 0, 1.0)], None, None),
            Err(GraphError::SelfLoop(0))
        ));
        assert!(matches!(
            Graph::build(2, &[(0, 2, 1.0)], None, None),
            Err(GraphError::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            Graph::build(2, &[(0, 1, -1.0)], None, None),
            Err(GraphError::NegativeWeight { .. })
        ));
        assert!(matches!(
            Graph::build(2, &[(0, 1, 1.0), (1, 0, 1.0)], None, None),
            Err(GraphError::DuplicateEdge { u: 0, v: 1 })
        ));
        assert!(matches!(
            Graph::build(2, &[(0, 1, f64::NAN)], None, None),
            Err(GraphError::NonFiniteWeight { .. })
        ));
    }

    #[test]
    fn attribute_sizes_are_checked() {
        let x = Array2::<f64>::zeros((3, 2));
        assert!(matches!(
            Graph::build(2, &[(0, 1, 1.0)], Some(x), None),
            Err(GraphError::FeatureRows { rows: 3, n: 2 })
        ));
        assert!(matches!(
            Graph::build(2, &[(0, 1, 1.0)], None, Some(vec![0])),
            Err(GraphError::LabelCount { len: 1, n: 2 })
        ));
    }

    #[test]
    fn laplacian_of_single_edge() {
        let l = unit(&[(0, 1)], 2).sym_norm_laplacian().to_dense();
        assert_eq!(l, ndarray::array![[1.0, -1.0], [-1.0, 1.0]]);
    }

    #[test]
    fn laplacian_of_path_matches_dense_formula() {
        let g = unit(&[(0, 1), (1, 2)], 3);
        let l = g.sym_norm_laplacian().to_dense();
        // dense I - D^{-1/2} A D^{-1/2}
        let a = g.adjacency().to_dense();
        let d: Vec<f64> = g.weighted_degrees();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 } else { 0.0 } - a[[i, j]] / (d[i] * d[j]).sqrt();
                assert_abs_diff_eq!(l[[i, j]], expected, epsilon = 1e-15);
            }
        }
        assert_abs_diff_eq!(l[[0, 1]], -1.0 / 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(l[[1, 2]], -1.0 / 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn isolated_node_has_identity_laplacian_row() {
        let g = unit(&[(0, 1)], 3);
        let l = g.sym_norm_laplacian().to_dense();
        assert_eq!(l.row(2).to_vec(), vec![0.0, 0.0, 1.0]);
        let p = g.propagation(2.0).to_dense();
        assert_eq!(p.row(2).to_vec(), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn propagation_on_single_edge() {
        let p = unit(&[(0, 1)], 2).propagation(2.0).to_dense();
        assert_eq!(p, ndarray::array![[-1.0, 2.0], [2.0, -1.0]]);
    }

    #[test]
    fn unnormalized_laplacian() {
        let l = unit(&[(0, 1), (1, 2)], 3).laplacian().to_dense();
        assert_eq!(
            l,
            ndarray::array![[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]]
        );
    }

    #[test]
    fn union_offsets_nodes() {
        let a = unit(&[(0, 1)], 2);
        let b = unit(&[(0, 1), (1, 2)], 3);
        let (u, offsets) = Graph::disjoint_union([&a, &b]);
        assert_eq!(offsets, vec![0, 2, 5]);
        assert_eq!(u.num_undirected_edges(), 3);
        assert_eq!(u.neighbors(3).map(|(j, _)| j).collect::<Vec<_>>(), vec![2, 4]);
    }
}
