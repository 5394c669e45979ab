use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{accuracy, PipelineError, Result, RunReport, TaskConfig};
use crate::diff::{Tape, Tensor};
use crate::graph::Graph;
use crate::nn::{Activation, Adam, Bound, GinLayer, Mlp, ParamStore};
use crate::pool::{unpool, GraphBatch, MaxCutPool, PoolConfig};

/// Disjoint node subsets for training, validation, and testing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeMasks {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

impl NodeMasks {
    /// Random split with the given train and validation fractions; the rest
    /// is test.
    pub fn random_split(n: usize, train: f64, val: f64, seed: u64) -> Result<Self> {
        if !(train > 0.0 && val >= 0.0 && train + val <= 1.0) {
            return Err(PipelineError::BadMasks(format!("fractions {train} and {val}")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = ((train * n as f64).round() as usize).max(1).min(n);
        let n_val = ((val * n as f64).round() as usize).min(n - n_train);
        let mut masks = Self {
            train: vec![false; n],
            val: vec![false; n],
            test: vec![false; n],
        };
        for (rank, &i) in order.iter().enumerate() {
            if rank < n_train {
                masks.train[i] = true;
            } else if rank < n_train + n_val {
                masks.val[i] = true;
            } else {
                masks.test[i] = true;
            }
        }
        Ok(masks)
    }

    /// Every node in the training set.
    pub fn all_train(n: usize) -> Self {
        Self {
            train: vec![true; n],
            val: vec![false; n],
            test: vec![false; n],
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.train.len() != n || self.val.len() != n || self.test.len() != n {
            return Err(PipelineError::BadMasks(format!("masks must have {n} entries")));
        }
        for i in 0..n {
            if u8::from(self.train[i]) + u8::from(self.val[i]) + u8::from(self.test[i]) > 1 {
                return Err(PipelineError::BadMasks(format!("node {i} is in more than one mask")));
            }
        }
        if !self.train.contains(&true) {
            return Err(PipelineError::BadMasks("training mask is empty".into()));
        }
        Ok(())
    }
}

fn indices(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter_map(|(i, &m)| m.then_some(i)).collect()
}

/// GIN, MaxCutPool, GIN, unpool, GIN, MLP head with dropout.
struct NodeClassifier {
    store: ParamStore<f64>,
    gin_in: GinLayer,
    pool: MaxCutPool,
    gin_pooled: GinLayer,
    gin_out: GinLayer,
    head: Mlp,
}

impl NodeClassifier {
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
        let gin_out = GinLayer::new(&mut store, "gin2", w, w, Activation::Relu, &mut rng);
        let head = Mlp::new(
            &mut store,
            "head",
            &[w, w, classes],
            Activation::Relu,
            config.dropout,
            &mut rng,
        )?;
        Ok(Self {
            store,
            gin_in,
            pool,
            gin_pooled,
            gin_out,
            head,
        })
    }

    /// Returns N×C logits and the cut loss.
    fn forward(
        &self,
        tape: &mut Tape<f64>,
        bound: &Bound,
        batch: &GraphBatch<f64>,
        x: Tensor,
        config: &TaskConfig,
        seed: u64,
        dropout_step: Option<u64>,
    ) -> Result<(Tensor, Tensor)> {
        let h = self.gin_in.forward(tape, bound, x, batch.ops())?;
        let pooled = self.pool.forward(tape, bound, h, batch, seed, None)?;
        let hp = self
            .gin_pooled
            .forward(tape, bound, pooled.features, pooled.pooled.ops())?;
        let lifted = unpool(tape, hp, &pooled.plan.assignment, config.unpool)?;
        let h = self.gin_out.forward(tape, bound, lifted, batch.ops())?;
        let logits = self.head.forward(tape, bound, h, dropout_step.map(|s| (seed, s)))?;
        Ok((logits, pooled.cut_loss))
    }
}

/// Trains on the masked nodes of one labeled graph; early stopping on
/// validation loss when a validation mask is present.
pub fn train_node_classifier(g: &Graph<f64>, masks: &NodeMasks, config: &TaskConfig, seed: u64) -> Result<RunReport> {
    config.validate()?;
    let labels = g.labels().ok_or(PipelineError::MissingLabels)?;
    masks.validate(g.n())?;
    let x = g
        .features()
        .cloned()
        .ok_or(crate::graph::GraphError::MissingFeatures(0))?;
    let start = Instant::now();
    let classes = labels.iter().copied().max().unwrap_or(0) + 1;
    let (train, val, test) = (indices(&masks.train), indices(&masks.val), indices(&masks.test));
    let targets = |idx: &[usize]| -> Vec<usize> { idx.iter().map(|&i| labels[i]).collect() };
    let (y_train, y_val, y_test) = (targets(&train), targets(&val), targets(&test));
    let batch = GraphBatch::single(g.clone());
    let beta = config.effective_beta();

    let mut model = NodeClassifier::new(x.ncols(), classes, config, seed)?;
    let mut adam = Adam::new(config.lr, &model.store);
    let mut report = RunReport {
        task: "node".into(),
        seed,
        degenerate: y_train.iter().all(|&y| y == y_train[0]),
        ..RunReport::default()
    };

    let evaluate = |model: &NodeClassifier, idx: &[usize], y: &[usize]| -> Result<Option<(f64, f64)>> {
        if idx.is_empty() {
            return Ok(None);
        }
        let mut tape = Tape::new();
        let bound = Bound::from_tensors(model.store.values().iter().map(|v| tape.constant(v.clone())).collect());
        let xt = tape.constant(x.clone());
        let (logits, cut) = model.forward(&mut tape, &bound, &batch, xt, config, seed, None)?;
        let picked = tape.gather_rows(logits, idx)?;
        let ce = tape.softmax_cross_entropy(picked, y)?;
        let loss = tape.scalar(ce) + beta * tape.scalar(cut);
        Ok(Some((loss, accuracy(tape.value(picked), y))))
    };

    let mut best: Option<(f64, usize, Vec<Array2<f64>>)> = None;
    let mut stale = 0;
    for epoch in 0..config.epochs {
        let mut tape = Tape::new();
        let bound = model.store.bind(&mut tape);
        let xt = tape.constant(x.clone());
        let pool_seed = seed.wrapping_add(epoch as u64);
        let (logits, cut) = model.forward(&mut tape, &bound, &batch, xt, config, pool_seed, Some(epoch as u64))?;
        let picked = tape.gather_rows(logits, &train)?;
        let ce = tape.softmax_cross_entropy(picked, &y_train)?;
        let weighted = tape.scale(cut, beta)?;
        let total = tape.add(ce, weighted)?;
        report.task_losses.push(tape.scalar(ce));
        report.cut_losses.push(tape.scalar(cut));
        report.total_losses.push(tape.scalar(total));
        report.lr_trace.push(adam.lr());
        report.epochs_run = epoch + 1;
        let grads = tape.backward(total)?;
        let grads = model.store.collect_grads(&bound, &grads);
        adam.step(&mut model.store, &grads)?;

        if let Some((val_loss, _)) = evaluate(&model, &val, &y_val)? {
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
    report.val_accuracy = evaluate(&model, &val, &y_val)?.map(|v| v.1);
    report.test_accuracy = evaluate(&model, &test, &y_test)?.map(|v| v.1);
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}
