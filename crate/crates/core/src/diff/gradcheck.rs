use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DiffError, Result, Tape, Tensor};
use crate::sparse::CsrMatrix;
use crate::Scalar;

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck<S> {
    /// `max |g_ad - g_fd| / max(1, |g_fd|)` over every parameter entry.
    pub max_rel_error: S,
    /// Parameter and entry where the maximum occurred.
    pub worst: Option<(usize, (usize, usize))>,
    pub entries_checked: usize,
}

/// Compares tape gradients of `f` against central differences with step
/// `eps`. `f` records its computation on the provided tape, reading the
/// parameters through the given leaf tensors, and returns the 1×1 loss.
pub fn finite_diff_check<S, F>(f: F, params: &[Array2<S>], eps: S) -> Result<GradCheck<S>>
where
    S: Scalar,
    F: Fn(&mut Tape<S>, &[Tensor]) -> Result<Tensor>,
{
    if !(eps > S::zero()) {
        return Err(DiffError::InvalidArgument {
            op: "finite_diff_check",
            reason: "eps must be positive".into(),
        });
    }
    let evaluate = |values: &[Array2<S>]| -> Result<S> {
        let mut tape = Tape::new();
        let leaves: Vec<Tensor> = values.iter().map(|v| tape.constant(v.clone())).collect();
        let loss = f(&mut tape, &leaves)?;
        Ok(tape.scalar(loss))
    };

    let mut tape = Tape::new();
    let leaves: Vec<Tensor> = params.iter().map(|v| tape.param(v.clone())).collect();
    let loss = f(&mut tape, &leaves)?;
    let base = tape.scalar(loss);
    let grads = tape.backward(loss)?;
    if evaluate(params)? != base {
        return Err(DiffError::NonDeterministicFunction);
    }

    let two_eps = eps + eps;
    let mut worst = None;
    let mut max_rel = S::zero();
    let mut entries = 0usize;
    let mut probe: Vec<Array2<S>> = params.to_vec();
    for (p, leaf) in leaves.iter().enumerate() {
        let analytic = grads.get_or_zeros(*leaf, (params[p].nrows(), params[p].ncols()));
        for r in 0..params[p].nrows() {
            for c in 0..params[p].ncols() {
                let orig = params[p][[r, c]];
                probe[p][[r, c]] = orig + eps;
                let plus = evaluate(&probe)?;
                probe[p][[r, c]] = orig - eps;
                let minus = evaluate(&probe)?;
                probe[p][[r, c]] = orig;
                let numeric = (plus - minus) / two_eps;
                let err = (analytic[[r, c]] - numeric).abs() / numeric.abs().max(S::one());
                entries += 1;
                if err > max_rel || worst.is_none() {
                    max_rel = max_rel.max(err);
                    worst = Some((p, (r, c)));
                }
            }
        }
    }
    Ok(GradCheck {
        max_rel_error: max_rel,
        worst,
        entries_checked: entries,
    })
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

/// Uniform values with magnitude in `[0.1, 1)`, keeping clear of kinks.
fn off_zero(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || {
        let m: f64 = rng.random_range(0.1..1.0);
        if rng.random::<bool>() {
            m
        } else {
            -m
        }
    })
}

fn random_sparse(rng: &mut ChaCha8Rng, rows: usize, cols: usize, density: f64) -> Arc<CsrMatrix<f64>> {
    let mut triplets = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if rng.random::<f64>() < density {
                triplets.push((r, c, rng.random_range(-1.0..1.0)));
            }
        }
    }
    Arc::new(CsrMatrix::from_triplets(rows, cols, triplets))
}

/// Reduces an arbitrary tensor to a scalar through a fixed random weighting,
/// so that every output entry contributes a distinct gradient.
fn weighted_sum(tape: &mut Tape<f64>, y: Tensor, weights: &Array2<f64>) -> Result<Tensor> {
    let w = tape.constant(weights.clone());
    let h = tape.hadamard(y, w)?;
    tape.reduce_sum(h)
}

/// Finite-difference check of every primitive on random inputs drawn from
/// `seed`. Returns `(primitive, max relative error)` pairs.
pub fn primitive_suite(seed: u64, eps: f64) -> Result<Vec<(&'static str, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let (n, f, k) = (5, 3, 4);

    let mut run = |name: &'static str,
                   params: Vec<Array2<f64>>,
                   f: &dyn Fn(&mut Tape<f64>, &[Tensor]) -> Result<Tensor>|
     -> Result<()> {
        let check = finite_diff_check(f, &params, eps)?;
        out.push((name, check.max_rel_error));
        Ok(())
    };

    let w_nk = uniform(&mut rng, n, k);
    let w_nf = uniform(&mut rng, n, f);
    let w_kf = uniform(&mut rng, k, f);
    let w_2f = uniform(&mut rng, 2, f);

    let (a, b) = (uniform(&mut rng, n, f), uniform(&mut rng, f, k));
    run("matmul", vec![a, b], &|t, p| {
        let y = t.matmul(p[0], p[1])?;
        weighted_sum(t, y, &w_nk)
    })?;

    let m = random_sparse(&mut rng, k, n, 0.5);
    let x = uniform(&mut rng, n, f);
    run("spmm", vec![x], &|t, p| {
        let y = t.spmm(&m, p[0])?;
        weighted_sum(t, y, &w_kf)
    })?;

    let (a, b) = (uniform(&mut rng, n, f), uniform(&mut rng, n, f));
    run("add", vec![a, b], &|t, p| {
        let y = t.add(p[0], p[1])?;
        weighted_sum(t, y, &w_nf)
    })?;

    let (x, bias) = (uniform(&mut rng, n, f), uniform(&mut rng, 1, f));
    run("add_bias_row", vec![x, bias], &|t, p| {
        let y = t.add_bias_row(p[0], p[1])?;
        weighted_sum(t, y, &w_nf)
    })?;

    let (a, b) = (uniform(&mut rng, n, f), uniform(&mut rng, n, f));
    run("hadamard", vec![a, b], &|t, p| {
        let y = t.hadamard(p[0], p[1])?;
        weighted_sum(t, y, &w_nf)
    })?;

    let (x, c) = (uniform(&mut rng, n, f), uniform(&mut rng, n, 1));
    run("row_scale", vec![x, c], &|t, p| {
        let y = t.row_scale(p[0], p[1])?;
        weighted_sum(t, y, &w_nf)
    })?;

    let x = uniform(&mut rng, n, f);
    run("scale", vec![x], &|t, p| {
        let y = t.scale(p[0], -1.7)?;
        weighted_sum(t, y, &w_nf)
    })?;

    let x = uniform(&mut rng, n, f);
    run("gather_rows", vec![x], &|t, p| {
        let y = t.gather_rows(p[0], &[3, 0])?;
        weighted_sum(t, y, &w_2f)
    })?;

    let x = uniform(&mut rng, n, f);
    run("tanh", vec![x], &|t, p| {
        let y = t.tanh(p[0])?;
        weighted_sum(t, y, &w_nf)
    })?;

    let x = off_zero(&mut rng, n, f);
    run("relu", vec![x], &|t, p| {
        let y = t.relu(p[0])?;
        weighted_sum(t, y, &w_nf)
    })?;

    let x = off_zero(&mut rng, n, f);
    run("elu", vec![x], &|t, p| {
        let y = t.elu(p[0])?;
        weighted_sum(t, y, &w_nf)
    })?;

    let x = uniform(&mut rng, n, f);
    run("reduce_sum", vec![x], &|t, p| t.reduce_sum(p[0]))?;

    let a = random_sparse(&mut rng, n, n, 0.5);
    let s = uniform(&mut rng, n, 1);
    run("quadratic_form", vec![s], &|t, p| t.quadratic_form(p[0], &a))?;

    let logits = uniform(&mut rng, n, k);
    let targets: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    run("softmax_cross_entropy", vec![logits], &|t, p| {
        t.softmax_cross_entropy(p[0], &targets)
    })?;

    let x = uniform(&mut rng, n, f);
    let segments = [1, 0, 1, 2, 0];
    let w_3f = uniform(&mut rng, 3, f);
    run("global_sum_pool", vec![x], &|t, p| {
        let y = t.global_sum_pool(p[0], &segments, 3)?;
        weighted_sum(t, y, &w_3f)
    })?;

    let x = uniform(&mut rng, n, f);
    let drop_seed = rng.random::<u64>();
    run("dropout", vec![x], &|t, p| {
        let y = t.dropout(p[0], 0.3, true, drop_seed, 1)?;
        weighted_sum(t, y, &w_nf)
    })?;

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn square_is_exact() {
        let check = finite_diff_check(
            |t, p| {
                let sq = t.hadamard(p[0], p[0])?;
                t.reduce_sum(sq)
            },
            &[array![[3.0]]],
            1e-5,
        )
        .unwrap();
        assert!(check.max_rel_error <= 1e-8, "{}", check.max_rel_error);
        assert_eq!(check.entries_checked, 1);
    }

    #[test]
    fn wrong_gradient_is_detected() {
        // relu at exactly 0 with a step straddling the kink
        let check = finite_diff_check(
            |t, p| {
                let r = t.relu(p[0])?;
                t.reduce_sum(r)
            },
            &[array![[0.0]]],
            1e-3,
        )
        .unwrap();
        assert!((check.max_rel_error - 0.5_f64).abs() < 1e-9);
    }

    #[test]
    fn non_deterministic_function_is_rejected() {
        let counter = std::cell::Cell::new(0u64);
        let res = finite_diff_check(
            |t, p| {
                counter.set(counter.get() + 1);
                let y = t.scale(p[0], counter.get() as f64)?;
                t.reduce_sum(y)
            },
            &[Array2::ones((4, 4))],
            1e-5,
        );
        assert_eq!(res.unwrap_err(), DiffError::NonDeterministicFunction);
    }

    #[test]
    fn every_primitive_passes() {
        for seed in 0..5 {
            for (name, err) in primitive_suite(seed, 1e-5).unwrap() {
                assert!(err <= 1e-5, "{name}: {err} (seed {seed})");
            }
        }
    }
}
