use std::f64::consts::PI;
use std::io::{BufRead, BufReader, Read, Write};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Graph, GraphError, Result};
use crate::Scalar;

/// Labeled collection of graphs for graph classification.
#[derive(Debug, Clone)]
pub struct Dataset<S> {
    pub graphs: Vec<Graph<S>>,
    pub graph_labels: Vec<usize>,
    pub class_count: usize,
}

impl<S: Scalar> Dataset<S> {
    pub fn new(graphs: Vec<Graph<S>>, graph_labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if graphs.is_empty() {
            return Err(GraphError::InvalidParams("dataset has no graphs".into()));
        }
        if graphs.len() != graph_labels.len() {
            return Err(GraphError::InvalidParams(format!(
                "{} graphs but {} labels",
                graphs.len(),
                graph_labels.len()
            )));
        }
        if let Some(&bad) = graph_labels.iter().find(|&&y| y >= class_count) {
            return Err(GraphError::InvalidParams(format!(
                "label {bad} outside [0, {class_count})"
            )));
        }
        Ok(Self {
            graphs,
            graph_labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    /// Keeps only the feature columns in `cols`.
    pub fn select_feature_columns(&self, cols: std::ops::Range<usize>) -> Result<Self> {
        let graphs = self
            .graphs
            .iter()
            .enumerate()
            .map(|(gi, g)| {
                let x = g.features().ok_or(GraphError::MissingFeatures(gi))?;
                let x = x.slice(ndarray::s![.., cols.clone()]).to_owned();
                g.clone().with_attributes(Some(x), g.labels().map(<[usize]>::to_vec))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(graphs, self.graph_labels.clone(), self.class_count)
    }
}

/// Parameters of the complete multipartite dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultipartiteParams {
    /// Number of clusters per graph, which is also the number of classes.
    pub centers: usize,
    pub graphs_per_class: usize,
    pub max_nodes_per_cluster: usize,
    /// Standard deviation of the isotropic Gaussian around each center.
    /// Centers sit on the unit circle.
    pub noise_scale: f64,
}

impl MultipartiteParams {
    pub fn validate(&self) -> Result<()> {
        if self.centers < 2 {
            return Err(GraphError::InvalidParams("centers must be at least 2".into()));
        }
        if self.graphs_per_class < 1 || self.max_nodes_per_cluster < 1 {
            return Err(GraphError::InvalidParams(
                "graphs per class and max nodes per cluster must be at least 1".into(),
            ));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(GraphError::InvalidParams("noise scale must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn total_graphs(&self) -> usize {
        self.centers * self.graphs_per_class
    }
}

/// Lazily generated multipartite graphs, class by class.
///
/// For class `c` the polygon of centers is rotated so the center colored `c`
/// lies on the positive x-axis: color `k` sits at angle `2π(k - c)/C`.
/// Each node carries features `[x, y, one_hot(color)]` and node label
/// `color`; the graph label is `c`.
pub struct MultipartiteGraphs<S> {
    params: MultipartiteParams,
    rng: ChaCha8Rng,
    produced: usize,
    _scalar: std::marker::PhantomData<S>,
}

impl<S: Scalar> MultipartiteGraphs<S> {
    pub fn new(params: MultipartiteParams, seed: u64) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            produced: 0,
            _scalar: std::marker::PhantomData,
        })
    }

    fn make_graph(&mut self, class: usize) -> Graph<S> {
        let c_count = self.params.centers;
        let sizes: Vec<usize> = (0..c_count)
            .map(|_| self.rng.random_range(1..=self.params.max_nodes_per_cluster))
            .collect();
        let n: usize = sizes.iter().sum();
        let mut colors = Vec::with_capacity(n);
        for (color, &size) in sizes.iter().enumerate() {
            colors.extend(std::iter::repeat_n(color, size));
        }
        let mut features = Array2::zeros((n, 2 + c_count));
        for (i, &color) in colors.iter().enumerate() {
            let angle = 2.0 * PI * (color as f64 - class as f64) / c_count as f64;
            let nx: f64 = self.rng.sample(StandardNormal);
            let ny: f64 = self.rng.sample(StandardNormal);
            features[[i, 0]] = S::of(angle.cos() + self.params.noise_scale * nx);
            features[[i, 1]] = S::of(angle.sin() + self.params.noise_scale * ny);
            features[[i, 2 + color]] = S::one();
        }
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if colors[u] != colors[v] {
                    edges.push((u, v, S::one()));
                }
            }
        }
        Graph::build(n, &edges, Some(features), Some(colors)).expect("multipartite construction is valid")
    }
}

impl<S: Scalar> Iterator for MultipartiteGraphs<S> {
    type Item = (Graph<S>, usize);

    fn next(&mut self) -> Option<Self::Item> {
        if self.produced >= self.params.total_graphs() {
            return None;
        }
        let class = self.produced / self.params.graphs_per_class;
        self.produced += 1;
        Some((self.make_graph(class), class))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.params.total_graphs() - self.produced;
        (left, Some(left))
    }
}

impl<S: Scalar> ExactSizeIterator for MultipartiteGraphs<S> {}

/// Materializes the whole multipartite dataset.
pub fn generate_multipartite_dataset<S: Scalar>(params: MultipartiteParams, seed: u64) -> Result<Dataset<S>> {
    let (graphs, labels) = MultipartiteGraphs::new(params, seed)?.unzip();
    Dataset::new(graphs, labels, params.centers)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    pub classes: usize,
}

impl DatasetHeader {
    pub const FORMAT: &'static str = "mcpool-ds";
    pub const VERSION: u32 = 1;

    pub fn new(classes: usize) -> Self {
        Self {
            format: Self::FORMAT.into(),
            version: Self::VERSION,
            classes,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct GraphRecord {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
    x: Vec<Vec<f64>>,
    y: usize,
}

/// Streams a dataset as JSON Lines: the header, then one record per graph.
/// Returns the number of records written.
pub fn write_dataset_jsonl<S, W, I>(mut out: W, classes: usize, graphs: I) -> Result<usize>
where
    S: Scalar,
    W: Write,
    I: IntoIterator<Item = (Graph<S>, usize)>,
{
    serde_json::to_writer(&mut out, &DatasetHeader::new(classes))?;
    out.write_all(b"\n")?;
    let mut count = 0;
    for (g, y) in graphs {
        let x = g
            .features()
            .map(|x| {
                x.rows()
                    .into_iter()
                    .map(|r| r.iter().map(|v| v.as_f64()).collect())
                    .collect()
            })
            .unwrap_or_default();
        let record = GraphRecord {
            n: g.n(),
            edges: g.undirected_edges().map(|(u, v, w)| (u, v, w.as_f64())).collect(),
            x,
            y,
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
        count += 1;
    }
    out.flush()?;
    Ok(count)
}

pub fn read_dataset_jsonl<S: Scalar, R: Read>(input: R) -> Result<Dataset<S>> {
    let mut lines = BufReader::new(input).lines();
    let header_line = lines
        .next()
        .transpose()?
        .ok_or_else(|| GraphError::MalformedDataset("missing header".into()))?;
    let header: DatasetHeader = serde_json::from_str(&header_line)?;
    if header.format != DatasetHeader::FORMAT || header.version != DatasetHeader::VERSION {
        return Err(GraphError::MalformedDataset(format!(
            "unsupported format {} v{}",
            header.format, header.version
        )));
    }
    let mut graphs = Vec::new();
    let mut labels = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: GraphRecord = serde_json::from_str(&line)?;
        let edges: Vec<_> = rec.edges.iter().map(|&(u, v, w)| (u, v, S::of(w))).collect();
        let features = if rec.x.is_empty() {
            None
        } else {
            let width = rec.x[0].len();
            if rec.x.iter().any(|r| r.len() != width) {
                return Err(GraphError::MalformedDataset("ragged feature rows".into()));
            }
            let flat: Vec<S> = rec.x.iter().flatten().map(|&v| S::of(v)).collect();
            Some(
                Array2::from_shape_vec((rec.x.len(), width), flat)
                    .map_err(|e| GraphError::MalformedDataset(e.to_string()))?,
            )
        };
        graphs.push(Graph::build(rec.n, &edges, features, None)?);
        labels.push(rec.y);
    }
    Dataset::new(graphs, labels, header.classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(centers: usize, per_class: usize, max: usize, noise: f64) -> MultipartiteParams {
        MultipartiteParams {
            centers,
            graphs_per_class: per_class,
            max_nodes_per_cluster: max,
            noise_scale: noise,
        }
    }

    #[test]
    fn three_classes_one_graph_each() {
        let d: Dataset<f64> = generate_multipartite_dataset(params(3, 1, 2, 0.1), 7).unwrap();
        assert_eq!(d.len(), 3);
        let mut labels = d.graph_labels.clone();
        labels.sort();
        assert_eq!(labels, vec![0, 1, 2]);
    }

    #[test]
    fn minimal_instance_is_k2_with_distinct_colors() {
        let d: Dataset<f64> = generate_multipartite_dataset(params(2, 1, 1, 0.0), 0).unwrap();
        for g in &d.graphs {
            assert_eq!((g.n(), g.num_undirected_edges()), (2, 1));
            let colors = g.labels().unwrap();
            assert_ne!(colors[0], colors[1]);
        }
    }

    #[test]
    fn positive_axis_cluster_matches_label() {
        let d: Dataset<f64> = generate_multipartite_dataset(params(5, 2, 3, 0.0), 3).unwrap();
        for (g, &y) in d.graphs.iter().zip(&d.graph_labels) {
            let x = g.features().unwrap();
            for (i, &color) in g.labels().unwrap().iter().enumerate() {
                let on_axis = (x[[i, 0]] - 1.0).abs() < 1e-12 && x[[i, 1]].abs() < 1e-12;
                assert_eq!(on_axis, color == y);
                assert_eq!(x[[i, 2 + color]], 1.0);
            }
        }
    }

    #[test]
    fn invalid_params() {
        assert!(MultipartiteGraphs::<f64>::new(params(1, 1, 1, 0.1), 0).is_err());
        assert!(MultipartiteGraphs::<f64>::new(params(3, 0, 1, 0.1), 0).is_err());
        assert!(MultipartiteGraphs::<f64>::new(params(3, 1, 0, 0.1), 0).is_err());
        assert!(MultipartiteGraphs::<f64>::new(params(3, 1, 1, -1.0), 0).is_err());
    }

    #[test]
    fn jsonl_round_trip_preserves_structure() {
        let d: Dataset<f64> = generate_multipartite_dataset(params(3, 2, 2, 0.1), 1).unwrap();
        let mut buf = Vec::new();
        let count = write_dataset_jsonl(
            &mut buf,
            3,
            d.graphs.iter().cloned().zip(d.graph_labels.iter().copied()),
        )
        .unwrap();
        assert_eq!(count, 6);
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(r#"{"format":"mcpool-ds","version":1,"classes":3}"#));
        let back: Dataset<f64> = read_dataset_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back.graph_labels, d.graph_labels);
        for (a, b) in back.graphs.iter().zip(&d.graphs) {
            assert_eq!(
                a.undirected_edges().collect::<Vec<_>>(),
                b.undirected_edges().collect::<Vec<_>>()
            );
            assert_eq!(a.features(), b.features());
        }
    }

    #[test]
    fn rejects_foreign_header() {
        let text = "{\"format\":\"other\",\"version\":1,\"classes\":2}\n";
        assert!(read_dataset_jsonl::<f64, _>(text.as_bytes()).is_err());
    }
}
