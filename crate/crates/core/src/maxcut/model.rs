use std::sync::Arc;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::objective::{cut_loss, cut_metrics, round_scores, CutResult};
use super::{CutError, Result};
use crate::diff::{Tape, Tensor};
use crate::graph::Graph;
use crate::nn::{Activation, Adam, Bound, GinLayer, GraphOps, ParamStore, PlateauScheduler, ScoreNet, ScoreNetConfig};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutModelConfig {
    pub gin_width: usize,
    pub gin_activation: Activation,
    pub scorenet: ScoreNetConfig,
    pub lr: f64,
    pub epochs: usize,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    /// Width of the random node features drawn for featureless graphs.
    pub feature_dim: usize,
}

impl Default for CutModelConfig {
    fn default() -> Self {
        Self {
            gin_width: 32,
            gin_activation: Activation::Elu,
            scorenet: ScoreNetConfig::default(),
            lr: 8e-4,
            epochs: 2000,
            plateau_factor: 0.8,
            plateau_patience: 100,
            feature_dim: 16,
        }
    }
}

/// One GIN layer followed by a [`ScoreNet`].
#[derive(Debug, Clone)]
pub struct CutModel<S> {
    pub store: ParamStore<S>,
    pub gin: GinLayer,
    pub scorenet: ScoreNet,
}

impl<S: Scalar> CutModel<S> {
    pub fn new(in_dim: usize, config: &CutModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let gin = GinLayer::new(
            &mut store,
            "gin",
            in_dim,
            config.gin_width,
            config.gin_activation,
            &mut rng,
        );
        let scorenet = ScoreNet::new(&mut store, "score", config.gin_width, &config.scorenet, &mut rng)?;
        Ok(Self { store, gin, scorenet })
    }

    /// N×1 scores in `(-1, 1)`.
    pub fn forward(&self, tape: &mut Tape<S>, bound: &Bound, x: Tensor, ops: &GraphOps<S>) -> Result<Tensor> {
        let h = self.gin.forward(tape, bound, x, ops)?;
        Ok(self.scorenet.forward(tape, bound, h, ops)?)
    }

    /// Scores without recording gradients.
    pub fn scores(&self, x: &Array2<S>, ops: &GraphOps<S>) -> Result<Vec<S>> {
        let mut tape = Tape::new();
        let bound = Bound::from_tensors(self.store.values().iter().map(|v| tape.constant(v.clone())).collect());
        let xt = tape.constant(x.clone());
        let s = self.forward(&mut tape, &bound, xt, ops)?;
        Ok(tape.value(s).iter().copied().collect())
    }
}

/// Node features for cut training: the graph's own, or standard normal
/// draws when it has none.
pub fn cut_features<S: Scalar>(g: &Graph<S>, feature_dim: usize, seed: u64) -> Array2<S> {
    match g.features() {
        Some(x) => x.clone(),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f00d);
            Array2::from_shape_simple_fn((g.n(), feature_dim), || {
                let v: f64 = StandardNormal.sample(&mut rng);
                S::of(v)
            })
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainingHistory {
    pub losses: Vec<f64>,
    pub lrs: Vec<f64>,
    /// `(epoch, new_lr)` for every scheduler reduction.
    pub lr_changes: Vec<(usize, f64)>,
    /// Epochs whose mean absolute score fell below `1e-3`.
    pub degenerate_epochs: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct CutTrainingOutcome<S> {
    /// Partition rounded from the lowest-loss checkpoint.
    pub result: CutResult,
    pub history: TrainingHistory,
    pub best_epoch: usize,
    pub best_loss: f64,
    pub epochs_run: usize,
    /// Scores of the lowest-loss checkpoint.
    pub scores: Vec<S>,
    /// Model restored to the lowest-loss checkpoint.
    pub model: CutModel<S>,
}

/// Full-batch minimization of the auxiliary cut loss; returns the partition
/// from the checkpoint with the lowest loss.
pub fn train_cut_model<S: Scalar>(g: &Graph<S>, config: &CutModelConfig, seed: u64) -> Result<CutTrainingOutcome<S>> {
    if g.n() == 0 || g.total_edge_weight() <= S::zero() {
        return Err(CutError::EmptyGraph);
    }
    if config.epochs == 0 {
        return Err(CutError::InvalidConfig("epochs must be at least 1".into()));
    }
    let x = cut_features(g, config.feature_dim, seed);
    let mut model = CutModel::new(x.ncols(), config, seed)?;
    let ops = GraphOps::new(g.clone());
    let adjacency: Arc<_> = Arc::clone(ops.adjacency());
    let mut adam = Adam::new(config.lr, &model.store);
    let mut scheduler = PlateauScheduler::new(config.lr, config.plateau_factor, config.plateau_patience)?;
    let mut history = TrainingHistory::default();
    let mut best: Option<(usize, f64, Vec<Array2<S>>, Vec<S>)> = None;

    for epoch in 0..config.epochs {
        let mut tape = Tape::new();
        let bound = model.store.bind(&mut tape);
        let xt = tape.constant(x.clone());
        let s = match model.forward(&mut tape, &bound, xt, &ops) {
            Ok(s) => s,
            Err(CutError::Nn(crate::nn::NnError::Diff(crate::diff::DiffError::NonFinite { .. }))) => {
                return Err(CutError::DivergedLoss { epoch })
            }
            Err(e) => return Err(e),
        };
        let loss = cut_loss(&mut tape, s, &adjacency)?;
        let value = tape.scalar(loss).as_f64();
        if !value.is_finite() {
            return Err(CutError::DivergedLoss { epoch });
        }
        let scores: Vec<S> = tape.value(s).iter().copied().collect();
        let mean_abs = scores.iter().map(|v| v.abs().as_f64()).sum::<f64>() / scores.len() as f64;
        if mean_abs < 1e-3 {
            history.degenerate_epochs.push(epoch);
        }
        history.losses.push(value);
        history.lrs.push(adam.lr());
        if best.as_ref().is_none_or(|b| value < b.1) {
            best = Some((epoch, value, model.store.values().to_vec(), scores));
        }

        let grads = tape.backward(loss)?;
        let grads = model.store.collect_grads(&bound, &grads);
        adam.step(&mut model.store, &grads)?;
        let next_lr = scheduler.step(value);
        if next_lr != adam.lr() {
            history.lr_changes.push((epoch, next_lr));
            adam.set_lr(next_lr);
        }
    }

    let (best_epoch, best_loss, params, scores) = best.expect("at least one epoch ran");
    for (dst, src) in model.store.values_mut().iter_mut().zip(params) {
        *dst = src;
    }
    let result = cut_metrics(g, &round_scores(&scores))?;
    Ok(CutTrainingOutcome {
        result,
        history,
        best_epoch,
        best_loss,
        epochs_run: config.epochs,
        scores,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{bipartition_oracle, generate, GeneratorSpec};

    fn small_config(epochs: usize) -> CutModelConfig {
        CutModelConfig {
            epochs,
            ..CutModelConfig::default()
        }
    }

    #[test]
    fn path_reaches_minimum_within_tens_of_epochs() {
        let g = Graph::<f64>::build(3, &[(0, 1, 1.0), (1, 2, 1.0)], None, None).unwrap();
        let out = train_cut_model(
            &g,
            &CutModelConfig {
                lr: 1e-2,
                ..small_config(60)
            },
            0,
        )
        .unwrap();
        assert_eq!(out.result.cut_fraction, 1.0);
        assert!(out.best_loss < -0.99, "{}", out.best_loss);
    }

    #[test]
    fn single_edge_is_symmetric_under_sum_aggregation() {
        // both endpoints aggregate to x_0 + x_1, so their scores coincide
        let g = Graph::<f64>::build(2, &[(0, 1, 1.0)], None, None).unwrap();
        let out = train_cut_model(&g, &small_config(10), 0).unwrap();
        assert_eq!(out.scores[0], out.scores[1]);
    }

    #[test]
    fn ring_is_cut_completely() {
        let g: Graph<f64> = generate(GeneratorSpec::Ring { n: 8 }, 0).unwrap();
        let out = train_cut_model(&g, &small_config(400), 1).unwrap();
        let oracle = cut_metrics(&g, &bipartition_oracle(&g).unwrap()).unwrap();
        assert_eq!(out.result.cut_fraction, oracle.cut_fraction);
        let mean_abs = out.scores.iter().map(|s| s.abs()).sum::<f64>() / 8.0;
        assert!(mean_abs > 0.9, "{mean_abs}");
    }

    #[test]
    fn history_is_consistent_and_checkpoint_is_best() {
        let g: Graph<f64> = generate(GeneratorSpec::Grid2d { rows: 3, cols: 3 }, 0).unwrap();
        let out = train_cut_model(&g, &small_config(50), 2).unwrap();
        assert_eq!(out.history.losses.len(), 50);
        assert_eq!(out.history.lrs.len(), 50);
        let min = out.history.losses.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(out.best_loss, min);
        assert_eq!(out.history.losses[out.best_epoch], min);
        let x = cut_features(&g, 16, 2);
        let restored = out.model.scores(&x, &GraphOps::new(g.clone())).unwrap();
        assert_eq!(restored, out.scores);
    }

    #[test]
    fn rejects_edgeless_graph() {
        let g = Graph::<f64>::build(3, &[], None, None).unwrap();
        assert!(matches!(
            train_cut_model(&g, &small_config(5), 0),
            Err(CutError::EmptyGraph)
        ));
    }

    #[test]
    fn deterministic_per_seed() {
        let g: Graph<f64> = generate(GeneratorSpec::ErdosRenyi { n: 10, p: 0.4 }, 3).unwrap();
        let a = train_cut_model(&g, &small_config(20), 5).unwrap();
        let b = train_cut_model(&g, &small_config(20), 5).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.scores, b.scores);
    }
}
