use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::assign::{assign_supernodes_segmented, Assignment};
use super::ops::{connect, reduce_features, ReduceVariant};
use super::select::{pool_size, select_topk_segmented, Selection};
use super::{check_offsets, Result};
use crate::diff::{Tape, Tensor};
use crate::graph::Graph;
use crate::nn::{Bound, GraphOps, ParamStore, ScoreNet, ScoreNetConfig};
use crate::sparse::CsrMatrix;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolConfig {
    pub ratio: f64,
    pub variant: ReduceVariant,
    pub max_iter: usize,
    pub scorenet: ScoreNetConfig,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            ratio: 0.5,
            variant: ReduceVariant::Plain,
            max_iter: 3,
            scorenet: ScoreNetConfig::default(),
        }
    }
}

impl PoolConfig {
    pub fn validate(&self) -> Result<()> {
        pool_size(1, self.ratio)?;
        Ok(())
    }
}

/// Disjoint union of graphs processed together.
///
/// Graph `b` occupies nodes `offsets[b]..offsets[b+1]`. The cut operator is
/// block diagonal with block `A_b / (|E_b| · B)`, so its quadratic form is
/// the mean auxiliary loss over the batch; edgeless graphs contribute zero.
#[derive(Debug)]
pub struct GraphBatch<S> {
    ops: GraphOps<S>,
    offsets: Vec<usize>,
    cut_operator: Arc<CsrMatrix<S>>,
}

impl<S: Scalar> GraphBatch<S> {
    pub fn new<'a>(graphs: impl IntoIterator<Item = &'a Graph<S>>) -> Self {
        let (union, offsets) = Graph::disjoint_union(graphs);
        Self::from_union(union, offsets).expect("offsets from disjoint_union are valid")
    }

    pub fn single(g: Graph<S>) -> Self {
        let n = g.n();
        Self::from_union(g, vec![0, n]).expect("single segment is valid")
    }

    /// Wraps a graph whose components are already laid out by `offsets`.
    /// No edge may cross two segments.
    pub fn from_union(union: Graph<S>, offsets: Vec<usize>) -> Result<Self> {
        check_offsets(&offsets, union.n())?;
        let segment = segment_ids(&offsets);
        let b = offsets.len() - 1;
        let mut totals = vec![S::zero(); b];
        for i in 0..union.n() {
            for (j, w) in union.neighbors(i) {
                if segment[j] != segment[i] {
                    return Err(super::PoolError::InvalidSegments(format!(
                        "edge ({i}, {j}) crosses segments"
                    )));
                }
                totals[segment[i]] += w;
            }
        }
        let scale: Vec<S> = totals
            .iter()
            .map(|&t| {
                if t > S::zero() {
                    (t * S::of_usize(b)).recip()
                } else {
                    S::zero()
                }
            })
            .collect();
        let a = union.adjacency();
        let values = (0..union.n())
            .flat_map(|i| a.row(i).map(move |(_, w)| (i, w)))
            .map(|(i, w)| w * scale[segment[i]])
            .collect();
        let cut_operator = Arc::new(CsrMatrix::from_raw(
            a.rows(),
            a.cols(),
            a.indptr().to_vec(),
            a.indices().to_vec(),
            values,
        ));
        Ok(Self {
            ops: GraphOps::new(union),
            offsets,
            cut_operator,
        })
    }

    pub fn graph(&self) -> &Graph<S> {
        self.ops.graph()
    }

    pub fn ops(&self) -> &GraphOps<S> {
        &self.ops
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn num_graphs(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n(&self) -> usize {
        self.ops.n()
    }

    /// Graph index of every node.
    pub fn segment_ids(&self) -> Vec<usize> {
        segment_ids(&self.offsets)
    }

    pub fn cut_operator(&self) -> &Arc<CsrMatrix<S>> {
        &self.cut_operator
    }
}

fn segment_ids(offsets: &[usize]) -> Vec<usize> {
    let mut ids = Vec::with_capacity(*offsets.last().unwrap_or(&0));
    for (b, w) in offsets.windows(2).enumerate() {
        ids.extend(std::iter::repeat_n(b, w[1] - w[0]));
    }
    ids
}

/// Selection and assignment reused across forward passes, e.g. to compare
/// gradients with the discrete choices held fixed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolPlan {
    pub selection: Selection,
    pub assignment: Assignment,
}

#[derive(Debug)]
pub struct PoolOutput<S> {
    /// N×1 scores in `(-1, 1)`.
    pub scores: Tensor,
    /// Mean auxiliary cut loss over the batch, 1×1.
    pub cut_loss: Tensor,
    /// K×F pooled features.
    pub features: Tensor,
    pub plan: PoolPlan,
    /// Coarsened batch over the supernodes, without self-loops.
    pub pooled: GraphBatch<S>,
}

/// ScoreNet-driven pooling layer.
#[derive(Debug, Clone)]
pub struct MaxCutPool {
    pub scorenet: ScoreNet,
    pub config: PoolConfig,
}

impl MaxCutPool {
    pub fn new<S: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<S>,
        name: &str,
        in_dim: usize,
        config: PoolConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let scorenet = ScoreNet::new(store, &format!("{name}.score"), in_dim, &config.scorenet, rng)?;
        Ok(Self { scorenet, config })
    }

    /// Scores, auxiliary loss, top-K selection, assignment, reduction, and
    /// connection in one pass. With `plan` the discrete steps are skipped and
    /// the given selection and assignment are reused.
    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        bound: &Bound,
        x: Tensor,
        batch: &GraphBatch<S>,
        seed: u64,
        plan: Option<&PoolPlan>,
    ) -> Result<PoolOutput<S>> {
        let scores = self.scorenet.forward(tape, bound, x, batch.ops())?;
        let cut_loss = tape.quadratic_form(scores, batch.cut_operator())?;
        let plan = match plan {
            Some(p) => p.clone(),
            None => self.plan(tape.value(scores).as_slice().expect("contiguous scores"), batch, seed)?,
        };
        let assignment_t = match self.config.variant {
            ReduceVariant::Plain => None,
            ReduceVariant::Expressive => Some(Arc::new(plan.assignment.matrix::<S>().transpose().clone())),
        };
        let features = reduce_features(
            tape,
            x,
            scores,
            &plan.selection.indices,
            assignment_t.as_ref(),
            self.config.variant,
        )?;
        let adjacency = connect(batch.graph(), &plan.assignment, true);
        let pooled = GraphBatch::from_union(Graph::from_adjacency(adjacency)?, plan.selection.offsets.clone())?;
        Ok(PoolOutput {
            scores,
            cut_loss,
            features,
            plan,
            pooled,
        })
    }

    /// Discrete part of the layer: per-graph top-K and BFS assignment.
    pub fn plan<S: Scalar>(&self, scores: &[S], batch: &GraphBatch<S>, seed: u64) -> Result<PoolPlan> {
        let selection = select_topk_segmented(scores, batch.offsets(), self.config.ratio)?;
        let assignment = assign_supernodes_segmented(
            batch.graph(),
            &selection.indices,
            batch.offsets(),
            self.config.max_iter,
            seed,
        )?;
        Ok(PoolPlan { selection, assignment })
    }
}

/// Result of pooling one graph with a freshly initialized layer.
#[derive(Debug, Clone)]
pub struct PooledGraph<S> {
    /// Coarsened graph; its features are the pooled K×F matrix.
    pub graph: Graph<S>,
    pub scores: Vec<S>,
    /// Auxiliary loss of the scores; 0 for edgeless input.
    pub cut_loss: S,
    pub plan: PoolPlan,
}

/// Pools `g` with features `x` through a layer initialized from `seed`.
pub fn maxcutpool<S: Scalar>(g: &Graph<S>, x: &Array2<S>, config: &PoolConfig, seed: u64) -> Result<PooledGraph<S>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let layer = MaxCutPool::new(&mut store, "pool", x.ncols(), config.clone(), &mut rng)?;
    let batch = GraphBatch::single(g.clone());
    let mut tape = Tape::new();
    let bound = Bound::from_tensors(store.values().iter().map(|v| tape.constant(v.clone())).collect());
    let xt = tape.constant(x.clone());
    let out = layer.forward(&mut tape, &bound, xt, &batch, seed, None)?;
    let features = tape.value(out.features).clone();
    let graph = out.pooled.graph().clone().with_attributes(Some(features), None)?;
    Ok(PooledGraph {
        graph,
        scores: tape.value(out.scores).iter().copied().collect(),
        cut_loss: tape.scalar(out.cut_loss),
        plan: out.plan,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate, GeneratorSpec};
    use crate::maxcut::cut_loss_value;

    fn ring(n: usize) -> Graph<f64> {
        generate(GeneratorSpec::Ring { n }, 0).unwrap()
    }

    fn features(n: usize, f: usize, seed: u64) -> Array2<f64> {
        crate::nn::glorot_init(n, f, seed)
    }

    #[test]
    fn halves_a_ring() {
        let g = ring(8);
        let out = maxcutpool(&g, &features(8, 3, 1), &PoolConfig::default(), 4).unwrap();
        assert_eq!(out.graph.n(), 4);
        assert_eq!(out.plan.assignment.k(), 4);
        let expected = cut_loss_value(&g, &out.scores).unwrap();
        assert!((out.cut_loss - expected).abs() < 1e-12);
    }

    #[test]
    fn full_ratio_keeps_topology_and_scales_features() {
        let g = ring(6);
        let x = features(6, 2, 3);
        let config = PoolConfig {
            ratio: 1.0,
            ..PoolConfig::default()
        };
        let out = maxcutpool(&g, &x, &config, 0).unwrap();
        assert_eq!(out.graph.adjacency().to_dense(), g.adjacency().to_dense());
        let pooled = out.graph.features().unwrap();
        for i in 0..6 {
            for f in 0..2 {
                assert!((pooled[[i, f]] - out.scores[i] * x[[i, f]]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_node_graph_has_zero_loss() {
        let g = Graph::<f64>::build(1, &[], None, None).unwrap();
        let out = maxcutpool(&g, &features(1, 2, 0), &PoolConfig::default(), 0).unwrap();
        assert_eq!(out.graph.n(), 1);
        assert_eq!(out.cut_loss, 0.0);
    }

    #[test]
    fn batch_loss_is_mean_of_graph_losses() {
        let graphs = [ring(5), Graph::build(2, &[], None, None).unwrap(), ring(4)];
        let batch = GraphBatch::new(&graphs);
        let mut tape = Tape::new();
        let s: Vec<f64> = (0..batch.n()).map(|i| ((i * 7 % 5) as f64 - 2.0) / 3.0).collect();
        let st = tape.constant(Array2::from_shape_vec((batch.n(), 1), s.clone()).unwrap());
        let l = tape.quadratic_form(st, batch.cut_operator()).unwrap();
        let l0 = cut_loss_value(&graphs[0], &s[0..5]).unwrap();
        let l2 = cut_loss_value(&graphs[2], &s[7..11]).unwrap();
        assert!((tape.scalar(l) - (l0 + l2) / 3.0).abs() < 1e-14);
    }

    #[test]
    fn batch_pooling_keeps_graphs_apart() {
        let graphs = [ring(6), ring(4)];
        let batch = GraphBatch::new(&graphs);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::<f64>::new();
        let layer = MaxCutPool::new(&mut store, "p", 2, PoolConfig::default(), &mut rng).unwrap();
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let x = tape.constant(features(10, 2, 1));
        let out = layer.forward(&mut tape, &bound, x, &batch, 0, None).unwrap();
        assert_eq!(out.plan.selection.offsets, vec![0, 3, 5]);
        assert_eq!(out.pooled.offsets(), &[0, 3, 5]);
        for (i, &c) in out.plan.assignment.clusters.iter().enumerate() {
            assert_eq!(i < 6, c < 3);
        }
    }

    #[test]
    fn crossing_edges_are_rejected() {
        let g = ring(4);
        assert!(GraphBatch::from_union(g, vec![0, 2, 4]).is_err());
    }
}
