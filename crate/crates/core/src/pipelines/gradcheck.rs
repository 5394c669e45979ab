use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::Result;
use crate::diff::{finite_diff_check, primitive_suite, DiffError};
use crate::graph::{generate, GeneratorSpec};
use crate::maxcut::{cut_loss, CutModel, CutModelConfig};
use crate::nn::{glorot_with, Activation, Bound, GinLayer, GraphOps, Linear, NnError, ParamStore, ScoreNetConfig};
use crate::pool::{GraphBatch, MaxCutPool, PoolConfig, PoolError, ReduceVariant};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckEntry {
    pub name: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradcheckEntry {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

fn small_scorenet() -> ScoreNetConfig {
    ScoreNetConfig {
        hetmp_sizes: vec![6, 6],
        mlp_sizes: vec![6],
        ..ScoreNetConfig::default()
    }
}

fn as_diff(e: impl Into<super::PipelineError>) -> DiffError {
    match e.into() {
        super::PipelineError::Diff(d) => d,
        super::PipelineError::Nn(NnError::Diff(d)) => d,
        super::PipelineError::Pool(PoolError::Diff(d)) => d,
        super::PipelineError::Pool(PoolError::Nn(NnError::Diff(d))) => d,
        other => DiffError::InvalidArgument {
            op: "gradcheck",
            reason: other.to_string(),
        },
    }
}

/// Cut loss of a GIN + ScoreNet model on ring(8).
fn cut_model_check(seed: u64, eps: f64) -> Result<f64> {
    let g = generate::<f64>(GeneratorSpec::Ring { n: 8 }, 0)?;
    let config = CutModelConfig {
        gin_width: 6,
        scorenet: small_scorenet(),
        ..CutModelConfig::default()
    };
    let model = CutModel::<f64>::new(4, &config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = glorot_with::<f64, _>(&mut rng, 8, 4);
    let ops = GraphOps::new(g);
    let adjacency = ops.adjacency().clone();
    let check = finite_diff_check(
        |tape, leaves| {
            let bound = Bound::from_tensors(leaves.to_vec());
            let xt = tape.constant(x.clone());
            let s = model.forward(tape, &bound, xt, &ops).map_err(as_diff)?;
            cut_loss(tape, s, &adjacency).map_err(as_diff)
        },
        model.store.values(),
        eps,
    )?;
    Ok(check.max_rel_error)
}

/// Cross-entropy plus cut loss through GIN, pooling with a frozen plan,
/// GIN, global sum, and a linear readout over a batch of two graphs.
fn pooling_check(seed: u64, eps: f64, variant: ReduceVariant) -> Result<f64> {
    let graphs = [
        generate::<f64>(GeneratorSpec::ErdosRenyi { n: 7, p: 0.5 }, seed)?,
        generate::<f64>(GeneratorSpec::Grid2d { rows: 2, cols: 3 }, 0)?,
    ];
    let batch = GraphBatch::new(&graphs);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::<f64>::new();
    let gin = GinLayer::new(&mut store, "gin0", 3, 5, Activation::Elu, &mut rng);
    let config = PoolConfig {
        variant,
        scorenet: small_scorenet(),
        ..PoolConfig::default()
    };
    let pool = MaxCutPool::new(&mut store, "pool", 5, config, &mut rng)?;
    let gin2 = GinLayer::new(&mut store, "gin1", 5, 5, Activation::Elu, &mut rng);
    let readout = Linear::new(&mut store, "readout", 5, 3, &mut rng);
    let x: Array2<f64> = glorot_with(&mut rng, batch.n(), 3);
    let targets = [2usize, 0];
    let beta = 0.5;

    let forward = |tape: &mut crate::diff::Tape<f64>, bound: &Bound, plan: Option<&crate::pool::PoolPlan>| {
        let xt = tape.constant(x.clone());
        let h = gin.forward(tape, bound, xt, batch.ops())?;
        let out = pool.forward(tape, bound, h, &batch, seed, plan)?;
        let h = gin2.forward(tape, bound, out.features, out.pooled.ops())?;
        let pooled = tape.global_sum_pool(h, &out.pooled.segment_ids(), 2)?;
        let logits = readout.forward(tape, bound, pooled)?;
        let ce = tape.softmax_cross_entropy(logits, &targets)?;
        let aux = tape.scale(out.cut_loss, beta)?;
        let loss = tape.add(ce, aux)?;
        Ok::<_, PoolError>((loss, out.plan))
    };

    let plan = {
        let mut tape = crate::diff::Tape::new();
        let bound = store.bind(&mut tape);
        forward(&mut tape, &bound, None)?.1
    };
    let check = finite_diff_check(
        |tape, leaves| {
            let bound = Bound::from_tensors(leaves.to_vec());
            forward(tape, &bound, Some(&plan)).map(|o| o.0).map_err(as_diff)
        },
        store.values(),
        eps,
    )?;
    Ok(check.max_rel_error)
}

/// Every primitive (tolerance 1e-5) plus the composed cut model and the
/// pooling pipeline in both reduction variants (tolerance 1e-4).
pub fn full_suite(seed: u64, eps: f64) -> Result<Vec<GradcheckEntry>> {
    let mut out: Vec<GradcheckEntry> = primitive_suite(seed, eps)?
        .into_iter()
        .map(|(name, err)| GradcheckEntry {
            name: name.to_string(),
            max_rel_error: err,
            tolerance: 1e-5,
        })
        .collect();
    let composed = [
        ("cut_model", cut_model_check(seed, eps)?),
        ("pooling_plain", pooling_check(seed, eps, ReduceVariant::Plain)?),
        (
            "pooling_expressive",
            pooling_check(seed, eps, ReduceVariant::Expressive)?,
        ),
    ];
    out.extend(composed.into_iter().map(|(name, err)| GradcheckEntry {
        name: name.to_string(),
        max_rel_error: err,
        tolerance: 1e-4,
    }));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_and_is_deterministic() {
        let a = full_suite(42, 1e-5).unwrap();
        for e in &a {
            assert!(e.passed(), "{e:?}");
        }
        assert_eq!(a, full_suite(42, 1e-5).unwrap());
    }

    #[test]
    fn coarse_step_fails() {
        let entries = full_suite(0, 1e-1).unwrap();
        assert!(entries.iter().any(|e| !e.passed()));
    }
}
