use std::time::Instant;

use ndarray::{concatenate, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{accuracy, PipelineError, Result, RunReport, TaskConfig};
use crate::diff::{Tape, Tensor};
use crate::graph::{Dataset, Graph};
use crate::nn::{Activation, Adam, Bound, GinLayer, Mlp, ParamStore};
use crate::pool::{GraphBatch, MaxCutPool, PoolConfig, PoolPlan};

/// Graph indices per partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// 80/10/10 split drawn separately inside every class.
pub fn stratified_split(labels: &[usize], class_count: usize, seed: u64) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for c in 0..class_count {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng);
        let n = members.len() as f64;
        let n_train = (0.8 * n).round() as usize;
        let n_val = ((0.1 * n).round() as usize).min(members.len() - n_train);
        split.train.extend(&members[..n_train]);
        split.val.extend(&members[n_train..n_train + n_val]);
        split.test.extend(&members[n_train + n_val..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    split
}

/// GIN, MaxCutPool, GIN, global sum, MLP readout.
struct GraphClassifier {
    store: ParamStore<f64>,
    gin_in: GinLayer,
    pool: MaxCutPool,
    gin_pooled: GinLayer,
    readout: Mlp,
}

struct Forward {
    logits: Tensor,
    cut_loss: Tensor,
}

impl GraphClassifier {
    fn new(in_dim: usize, classes: usize, config: &TaskConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let w = config.mp_width;
        let gin_in = GinLayer::new(&mut store, "gin0", in_dim, w, Activation::Relu, &mut rng);
        let pool_config = PoolConfig {
            ratio: config.ratio,
            variant: config.variant,
            max_iter: config.max_iter,
            scorenet: config.scorenet.clone(),
        };
        let pool = MaxCutPool::new(&mut store, "pool", w, pool_config, &mut rng)?;
        let gin_pooled = GinLayer::new(&mut store, "gin1", w, w, Activation::Relu, &mut rng);
        let readout = Mlp::new(&mut store, "readout", &[w, w, classes], Activation::Relu, 0.0, &mut rng)?;
        Ok(Self {
            store,
            gin_in,
            pool,
            gin_pooled,
            readout,
        })
    }

    fn forward(
        &self,
        tape: &mut Tape<f64>,
        bound: &Bound,
        batch: &GraphBatch<f64>,
        x: Tensor,
        seed: u64,
        plan: Option<&PoolPlan>,
    ) -> Result<Forward> {
        let h = self.gin_in.forward(tape, bound, x, batch.ops())?;
        let pooled = self.pool.forward(tape, bound, h, batch, seed, plan)?;
        let h = self
            .gin_pooled
            .forward(tape, bound, pooled.features, pooled.pooled.ops())?;
        let segments = pooled.pooled.segment_ids();
        let g = tape.global_sum_pool(h, &segments, batch.num_graphs())?;
        let logits = self.readout.forward(tape, bound, g, None)?;
        Ok(Forward {
            logits,
            cut_loss: pooled.cut_loss,
        })
    }
}

struct Prepared {
    batch: GraphBatch<f64>,
    x: Array2<f64>,
    targets: Vec<usize>,
}

fn prepare(d: &Dataset<f64>, idx: &[usize]) -> Result<Prepared> {
    let graphs: Vec<&Graph<f64>> = idx.iter().map(|&i| &d.graphs[i]).collect();
    let mut blocks = Vec::with_capacity(graphs.len());
    for (&i, g) in idx.iter().zip(&graphs) {
        blocks.push(g.features().ok_or(crate::graph::GraphError::MissingFeatures(i))?.view());
    }
    let x = concatenate(Axis(0), &blocks)
        .map_err(|e| PipelineError::InvalidConfig(format!("feature widths differ: {e}")))?;
    Ok(Prepared {
        batch: GraphBatch::new(graphs),
        x,
        targets: idx.iter().map(|&i| d.graph_labels[i]).collect(),
    })
}

/// Mean total loss and accuracy over prepared batches, weighted by size.
fn evaluate(model: &GraphClassifier, batches: &[Prepared], beta: f64, seed: u64) -> Result<Option<(f64, f64)>> {
    let total: usize = batches.iter().map(|b| b.targets.len()).sum();
    if total == 0 {
        return Ok(None);
    }
    let (mut loss, mut hits) = (0.0, 0.0);
    for b in batches {
        let mut tape = Tape::new();
        let bound = Bound::from_tensors(model.store.values().iter().map(|v| tape.constant(v.clone())).collect());
        let x = tape.constant(b.x.clone());
        let out = model.forward(&mut tape, &bound, &b.batch, x, seed, None)?;
        let ce = tape.softmax_cross_entropy(out.logits, &b.targets)?;
        let weight = b.targets.len() as f64;
        loss += weight * (tape.scalar(ce) + beta * tape.scalar(out.cut_loss));
        hits += weight * accuracy(tape.value(out.logits), &b.targets);
    }
    Ok(Some((loss / total as f64, hits / total as f64)))
}

/// Trains the pooling classifier with early stopping on validation loss
/// and reports metrics of the best-validation checkpoint.
pub fn train_graph_classifier(d: &Dataset<f64>, config: &TaskConfig, seed: u64) -> Result<RunReport> {
    config.validate()?;
    if d.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    let start = Instant::now();
    let in_dim = d.graphs[0]
        .features()
        .ok_or(crate::graph::GraphError::MissingFeatures(0))?
        .ncols();
    let split = stratified_split(&d.graph_labels, d.class_count, seed);
    if split.train.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    let chunks =
        |idx: &[usize]| -> Result<Vec<Prepared>> { idx.chunks(config.batch_size).map(|c| prepare(d, c)).collect() };
    let val = chunks(&split.val)?;
    let test = chunks(&split.test)?;
    let beta = config.effective_beta();

    let mut model = GraphClassifier::new(in_dim, d.class_count.max(1), config, seed)?;
    let mut adam = Adam::new(config.lr, &model.store);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed);
    shuffle_rng.set_stream(1);
    let mut report = RunReport {
        task: "graph".into(),
        seed,
        degenerate: {
            let first = d.graph_labels[split.train[0]];
            split.train.iter().all(|&i| d.graph_labels[i] == first)
        },
        ..RunReport::default()
    };
    let mut best: Option<(f64, usize, Vec<Array2<f64>>)> = None;
    let mut stale = 0;
    let mut order = split.train.clone();
    let mut step = 0u64;

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut task_sum, mut cut_sum, mut total_sum, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let b = prepare(d, chunk)?;
            let mut tape = Tape::new();
            let bound = model.store.bind(&mut tape);
            let x = tape.constant(b.x);
            let out = model.forward(&mut tape, &bound, &b.batch, x, seed.wrapping_add(step), None)?;
            let ce = tape.softmax_cross_entropy(out.logits, &b.targets)?;
            let weighted = tape.scale(out.cut_loss, beta)?;
            let total = tape.add(ce, weighted)?;
            task_sum += tape.scalar(ce);
            cut_sum += tape.scalar(out.cut_loss);
            total_sum += tape.scalar(total);
            batches += 1;
            let grads = tape.backward(total)?;
            let grads = model.store.collect_grads(&bound, &grads);
            adam.step(&mut model.store, &grads)?;
            step += 1;
        }
        let k = batches as f64;
        report.task_losses.push(task_sum / k);
        report.cut_losses.push(cut_sum / k);
        report.total_losses.push(total_sum / k);
        report.lr_trace.push(adam.lr());
        report.epochs_run = epoch + 1;

        if let Some((val_loss, _)) = evaluate(&model, &val, beta, seed)? {
            report.val_losses.push(val_loss);
            if best.as_ref().is_none_or(|b| val_loss < b.0) {
                best = Some((val_loss, epoch, model.store.values().to_vec()));
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
        }
    }

    match best {
        Some((val_loss, epoch, params)) => {
            for (dst, src) in model.store.values_mut().iter_mut().zip(params) {
                *dst = src;
            }
            report.checkpoint_epoch = epoch;
            report.best_val_loss = Some(val_loss);
        }
        None => report.checkpoint_epoch = report.epochs_run - 1,
    }
    report.val_accuracy = evaluate(&model, &val, beta, seed)?.map(|v| v.1);
    report.test_accuracy = evaluate(&model, &test, beta, seed)?.map(|v| v.1);
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_multipartite_dataset, MultipartiteParams};
    use crate::nn::ScoreNetConfig;

    fn tiny_config(epochs: usize) -> TaskConfig {
        TaskConfig {
            epochs,
            mp_width: 8,
            scorenet: ScoreNetConfig {
                hetmp_sizes: vec![8, 8],
                mlp_sizes: vec![8],
                ..ScoreNetConfig::default()
            },
            ..TaskConfig::default()
        }
    }

    fn dataset(per_class: usize) -> Dataset<f64> {
        generate_multipartite_dataset(
            MultipartiteParams {
                centers: 3,
                graphs_per_class: per_class,
                max_nodes_per_cluster: 3,
                noise_scale: 0.1,
            },
            0,
        )
        .unwrap()
    }

    #[test]
    fn split_is_stratified_and_disjoint() {
        let labels: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let s = stratified_split(&labels, 3, 1);
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (48, 6, 6));
        for part in [&s.train, &s.val, &s.test] {
            for c in 0..3 {
                let count = part.iter().filter(|&&i| labels[i] == c).count();
                assert_eq!(count * 3, part.len());
            }
        }
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..60).collect::<Vec<_>>());
    }

    #[test]
    fn report_bookkeeping() {
        let d = dataset(10);
        let config = TaskConfig {
            beta: 0.7,
            ..tiny_config(5)
        };
        let r = train_graph_classifier(&d, &config, 3).unwrap();
        assert_eq!(r.task_losses.len(), r.epochs_run);
        assert_eq!(r.val_losses.len(), r.epochs_run);
        for e in 0..r.epochs_run {
            let expected = r.task_losses[e] + 0.7 * r.cut_losses[e];
            assert!((r.total_losses[e] - expected).abs() < 1e-12);
        }
        let best = r.val_losses.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(r.best_val_loss, Some(best));
        assert_eq!(r.val_losses[r.checkpoint_epoch], best);
    }

    #[test]
    fn no_loss_variant_still_moves_scorenet() {
        let d = dataset(6);
        let config = TaskConfig {
            no_loss: true,
            ..tiny_config(1)
        };
        let model = GraphClassifier::new(5, 3, &config, 0).unwrap();
        let before = model.store.values().to_vec();
        let b = prepare(&d, &[0, 1, 2, 3, 4, 5]).unwrap();
        let mut tape = Tape::new();
        let bound = model.store.bind(&mut tape);
        let x = tape.constant(b.x.clone());
        let out = model.forward(&mut tape, &bound, &b.batch, x, 0, None).unwrap();
        let ce = tape.softmax_cross_entropy(out.logits, &b.targets).unwrap();
        let grads = tape.backward(ce).unwrap();
        let grads = model.store.collect_grads(&bound, &grads);
        let score_grad: f64 = model
            .store
            .names()
            .iter()
            .zip(&grads)
            .filter(|(n, _)| n.starts_with("pool.score"))
            .map(|(_, g)| g.iter().map(|v| v.abs()).sum::<f64>())
            .sum();
        assert!(score_grad > 0.0);
        assert_eq!(before.len(), grads.len());
    }

    #[test]
    fn single_class_is_flagged() {
        let g = Graph::build(2, &[(0, 1, 1.0)], Some(ndarray::array![[1.0, 0.0], [0.0, 1.0]]), None).unwrap();
        let d = Dataset::new(vec![g.clone(), g.clone(), g], vec![0, 0, 0], 1).unwrap();
        let r = train_graph_classifier(&d, &tiny_config(3), 0).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.val_losses.len(), 0);
        assert_eq!(r.test_accuracy, Some(1.0));
    }
}
