//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records primitive operations in execution order; each
//! [`Tensor`] is a handle to one recorded value. [`Tape::backward`] walks the
//! record in reverse once and returns the gradient of a scalar loss with
//! respect to every tensor that requires one. Tapes are single-use: build a
//! fresh tape per training step.

mod gradcheck;

pub use gradcheck::{finite_diff_check, primitive_suite, GradCheck};

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use ndarray::{Array2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::sparse::CsrMatrix;
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("loss is not attached to this tape: {0}")]
    DetachedLoss(&'static str),
    #[error("tensor belongs to a different tape")]
    ForeignTensor,
    #[error("invalid argument to {op}: {reason}")]
    InvalidArgument { op: &'static str, reason: String },
    #[error("function returned different values for identical parameters")]
    NonDeterministicFunction,
}

pub type Result<T, E = DiffError> = std::result::Result<T, E>;

static NEXT_TAPE: AtomicUsize = AtomicUsize::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tensor {
    tape: usize,
    index: usize,
}

enum Op<S> {
    Leaf,
    MatMul(Tensor, Tensor),
    SpMM(Arc<CsrMatrix<S>>, Tensor),
    Add(Tensor, Tensor),
    AddBiasRow(Tensor, Tensor),
    Hadamard(Tensor, Tensor),
    RowScale(Tensor, Tensor),
    Scale(Tensor, S),
    GatherRows(Tensor, Arc<[usize]>),
    Tanh(Tensor),
    Relu(Tensor),
    Elu(Tensor),
    ReduceSum(Tensor),
    QuadraticForm(Tensor, Arc<CsrMatrix<S>>),
    SoftmaxCrossEntropy {
        logits: Tensor,
        targets: Arc<[usize]>,
        probs: Array2<S>,
    },
    GlobalSumPool {
        x: Tensor,
        segments: Arc<[usize]>,
    },
    Dropout {
        x: Tensor,
        mask: Array2<S>,
    },
}

struct Node<S> {
    value: Array2<S>,
    op: Op<S>,
    requires_grad: bool,
}

/// Ordered record of primitive operations.
pub struct Tape<S> {
    id: usize,
    nodes: Vec<Node<S>>,
    consumed: bool,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by one backward pass.
#[derive(Debug)]
pub struct Gradients<S> {
    tape: usize,
    grads: Vec<Option<Array2<S>>>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient of the loss with respect to the leaf `t`; `None` when `t`
    /// does not require a gradient or does not influence the loss.
    /// Intermediate values are not retained.
    pub fn get(&self, t: Tensor) -> Option<&Array2<S>> {
        if t.tape != self.tape {
            return None;
        }
        self.grads.get(t.index).and_then(Option::as_ref)
    }

    /// Gradient of `t`, or zeros of `shape` when it received none.
    pub fn get_or_zeros(&self, t: Tensor, shape: (usize, usize)) -> Array2<S> {
        self.get(t).cloned().unwrap_or_else(|| Array2::zeros(shape))
    }
}

fn shape<S>(a: &Array2<S>) -> (usize, usize) {
    (a.nrows(), a.ncols())
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, value: Array2<S>) -> Tensor {
        self.push_leaf(value, true)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Array2<S>) -> Tensor {
        self.push_leaf(value, false)
    }

    fn push_leaf(&mut self, value: Array2<S>, requires_grad: bool) -> Tensor {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Tensor {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    pub fn value(&self, t: Tensor) -> &Array2<S> {
        assert_eq!(t.tape, self.id, "tensor belongs to a different tape");
        &self.nodes[t.index].value
    }

    pub fn shape(&self, t: Tensor) -> (usize, usize) {
        shape(self.value(t))
    }

    /// Value of a 1×1 tensor.
    pub fn scalar(&self, t: Tensor) -> S {
        self.value(t)[[0, 0]]
    }

    fn check(&self, t: Tensor) -> Result<&Array2<S>> {
        if t.tape != self.id || t.index >= self.nodes.len() {
            return Err(DiffError::ForeignTensor);
        }
        Ok(&self.nodes[t.index].value)
    }

    fn needs(&self, t: Tensor) -> bool {
        self.nodes[t.index].requires_grad
    }

    fn push(&mut self, op_name: &'static str, value: Array2<S>, op: Op<S>, inputs: &[Tensor]) -> Result<Tensor> {
        if !value.iter().all(|v| v.is_finite()) {
            return Err(DiffError::NonFinite { op: op_name });
        }
        let requires_grad = inputs.iter().any(|&t| self.needs(t));
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Tensor {
            tape: self.id,
            index: self.nodes.len() - 1,
        })
    }

    fn same_shape(&self, op: &'static str, a: Tensor, b: Tensor) -> Result<()> {
        let (sa, sb) = (shape(self.check(a)?), shape(self.check(b)?));
        if sa != sb {
            return Err(DiffError::ShapeMismatch {
                op,
                left: sa,
                right: sb,
            });
        }
        Ok(())
    }

    /// Dense product `a · b`.
    pub fn matmul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let (va, vb) = (self.check(a)?, self.check(b)?);
        if va.ncols() != vb.nrows() {
            return Err(DiffError::ShapeMismatch {
                op: "matmul",
                left: shape(va),
                right: shape(vb),
            });
        }
        let value = va.dot(vb);
        self.push("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    /// Sparse propagation `m · x` with a constant sparse operator.
    pub fn spmm(&mut self, m: &Arc<CsrMatrix<S>>, x: Tensor) -> Result<Tensor> {
        let vx = self.check(x)?;
        if m.cols() != vx.nrows() {
            return Err(DiffError::ShapeMismatch {
                op: "spmm",
                left: m.shape(),
                right: shape(vx),
            });
        }
        let value = m.spmm(vx.view());
        self.push("spmm", value, Op::SpMM(Arc::clone(m), x), &[x])
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.same_shape("add", a, b)?;
        let value = self.value(a) + self.value(b);
        self.push("add", value, Op::Add(a, b), &[a, b])
    }

    /// Adds the 1×F row `bias` to every row of `x`.
    pub fn add_bias_row(&mut self, x: Tensor, bias: Tensor) -> Result<Tensor> {
        let (vx, vb) = (self.check(x)?, self.check(bias)?);
        if vb.nrows() != 1 || vb.ncols() != vx.ncols() {
            return Err(DiffError::ShapeMismatch {
                op: "add_bias_row",
                left: shape(vx),
                right: shape(vb),
            });
        }
        let value = vx + vb;
        self.push("add_bias_row", value, Op::AddBiasRow(x, bias), &[x, bias])
    }

    /// Elementwise product of equally shaped tensors.
    pub fn hadamard(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.same_shape("hadamard", a, b)?;
        let value = self.value(a) * self.value(b);
        self.push("hadamard", value, Op::Hadamard(a, b), &[a, b])
    }

    /// Multiplies row `i` of `x` (N×F) by `c[i]` (N×1).
    pub fn row_scale(&mut self, x: Tensor, c: Tensor) -> Result<Tensor> {
        let (vx, vc) = (self.check(x)?, self.check(c)?);
        if vc.ncols() != 1 || vc.nrows() != vx.nrows() {
            return Err(DiffError::ShapeMismatch {
                op: "row_scale",
                left: shape(vx),
                right: shape(vc),
            });
        }
        let value = vx * vc;
        self.push("row_scale", value, Op::RowScale(x, c), &[x, c])
    }

    pub fn scale(&mut self, a: Tensor, factor: S) -> Result<Tensor> {
        let value = self.check(a)? * factor;
        self.push("scale", value, Op::Scale(a, factor), &[a])
    }

    /// Rows of `x` at `indices`, in that order.
    pub fn gather_rows(&mut self, x: Tensor, indices: &[usize]) -> Result<Tensor> {
        let vx = self.check(x)?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= vx.nrows()) {
            return Err(DiffError::InvalidArgument {
                op: "gather_rows",
                reason: format!("row {bad} of {}", vx.nrows()),
            });
        }
        let value = vx.select(Axis(0), indices);
        self.push("gather_rows", value, Op::GatherRows(x, indices.into()), &[x])
    }

    pub fn tanh(&mut self, a: Tensor) -> Result<Tensor> {
        let value = self.check(a)?.mapv(S::tanh);
        self.push("tanh", value, Op::Tanh(a), &[a])
    }

    pub fn relu(&mut self, a: Tensor) -> Result<Tensor> {
        let value = self.check(a)?.mapv(|v| v.max(S::zero()));
        self.push("relu", value, Op::Relu(a), &[a])
    }

    /// ELU with unit scale: `x` for `x > 0`, `exp(x) - 1` otherwise.
    pub fn elu(&mut self, a: Tensor) -> Result<Tensor> {
        let value = self.check(a)?.mapv(|v| if v > S::zero() { v } else { v.exp_m1() });
        self.push("elu", value, Op::Elu(a), &[a])
    }

    /// Sum of all entries as a 1×1 tensor.
    pub fn reduce_sum(&mut self, a: Tensor) -> Result<Tensor> {
        let total = self.check(a)?.sum();
        self.push("reduce_sum", Array2::from_elem((1, 1), total), Op::ReduceSum(a), &[a])
    }

    /// `sᵀ A s` for a column `s` (N×1) and constant sparse `A` (N×N).
    pub fn quadratic_form(&mut self, s: Tensor, a: &Arc<CsrMatrix<S>>) -> Result<Tensor> {
        let vs = self.check(s)?;
        if vs.ncols() != 1 || a.rows() != vs.nrows() || a.cols() != vs.nrows() {
            return Err(DiffError::ShapeMismatch {
                op: "quadratic_form",
                left: shape(vs),
                right: a.shape(),
            });
        }
        let col = vs.column(0);
        let mut total = S::zero();
        for i in 0..a.rows() {
            let row: S = a.row(i).map(|(j, w)| w * col[j]).sum();
            total += col[i] * row;
        }
        self.push(
            "quadratic_form",
            Array2::from_elem((1, 1), total),
            Op::QuadraticForm(s, Arc::clone(a)),
            &[s],
        )
    }

    /// Mean over rows of `-log softmax(logits)[target]`.
    pub fn softmax_cross_entropy(&mut self, logits: Tensor, targets: &[usize]) -> Result<Tensor> {
        let vl = self.check(logits)?;
        if targets.len() != vl.nrows() {
            return Err(DiffError::ShapeMismatch {
                op: "softmax_cross_entropy",
                left: shape(vl),
                right: (targets.len(), 1),
            });
        }
        if targets.is_empty() {
            return Err(DiffError::InvalidArgument {
                op: "softmax_cross_entropy",
                reason: "no rows".into(),
            });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= vl.ncols()) {
            return Err(DiffError::InvalidArgument {
                op: "softmax_cross_entropy",
                reason: format!("target {bad} with {} classes", vl.ncols()),
            });
        }
        let mut probs = vl.clone();
        let mut loss = S::zero();
        for (mut row, &t) in probs.rows_mut().into_iter().zip(targets) {
            let max = row.fold(S::neg_infinity(), |m, &v| m.max(v));
            row.mapv_inplace(|v| (v - max).exp());
            let z = row.sum();
            loss += z.ln() - (row[t].ln());
            row.mapv_inplace(|v| v / z);
        }
        let mean = loss / S::of_usize(targets.len());
        self.push(
            "softmax_cross_entropy",
            Array2::from_elem((1, 1), mean),
            Op::SoftmaxCrossEntropy {
                logits,
                targets: targets.into(),
                probs,
            },
            &[logits],
        )
    }

    /// Sums rows of `x` into `num_segments` rows by segment id.
    pub fn global_sum_pool(&mut self, x: Tensor, segments: &[usize], num_segments: usize) -> Result<Tensor> {
        let vx = self.check(x)?;
        if segments.len() != vx.nrows() {
            return Err(DiffError::ShapeMismatch {
                op: "global_sum_pool",
                left: shape(vx),
                right: (segments.len(), 1),
            });
        }
        if let Some(&bad) = segments.iter().find(|&&s| s >= num_segments) {
            return Err(DiffError::InvalidArgument {
                op: "global_sum_pool",
                reason: format!("segment {bad} of {num_segments}"),
            });
        }
        let mut value = Array2::zeros((num_segments, vx.ncols()));
        for (row, &seg) in vx.rows().into_iter().zip(segments) {
            let mut out = value.row_mut(seg);
            out += &row;
        }
        self.push(
            "global_sum_pool",
            value,
            Op::GlobalSumPool {
                x,
                segments: segments.into(),
            },
            &[x],
        )
    }

    /// Inverted dropout. Identity when `train` is false or `p == 0`.
    ///
    /// The mask is drawn from a counter-based stream keyed by
    /// `(seed, step)`, so a run is bit-reproducible.
    pub fn dropout(&mut self, x: Tensor, p: f64, train: bool, seed: u64, step: u64) -> Result<Tensor> {
        let vx = self.check(x)?;
        if !(0.0..1.0).contains(&p) {
            return Err(DiffError::InvalidArgument {
                op: "dropout",
                reason: format!("p = {p}"),
            });
        }
        if !train || p == 0.0 {
            return Ok(x);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(step);
        let keep = S::of(1.0 / (1.0 - p));
        let mask =
            Array2::from_shape_simple_fn(vx.raw_dim(), || if rng.random::<f64>() < p { S::zero() } else { keep });
        let value = vx * &mask;
        self.push("dropout", value, Op::Dropout { x, mask }, &[x])
    }

    /// Reverse pass from the 1×1 `loss`. A tape supports one backward pass.
    pub fn backward(&mut self, loss: Tensor) -> Result<Gradients<S>> {
        if loss.tape != self.id || loss.index >= self.nodes.len() {
            return Err(DiffError::DetachedLoss("loss was recorded on another tape"));
        }
        if self.consumed {
            return Err(DiffError::DetachedLoss("backward already ran on this tape"));
        }
        if shape(&self.nodes[loss.index].value) != (1, 1) {
            return Err(DiffError::DetachedLoss("loss must be a 1x1 tensor"));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Array2<S>>> = Vec::new();
        grads.resize_with(loss.index + 1, || None);
        grads[loss.index] = Some(Array2::from_elem((1, 1), S::one()));

        for idx in (0..=loss.index).rev() {
            let Some(gy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(gy);
                continue;
            }
            if !node.requires_grad {
                continue;
            }
            let nodes = &self.nodes;
            let mut send = |t: Tensor, delta: Array2<S>| {
                if !nodes[t.index].requires_grad {
                    return;
                }
                match &mut grads[t.index] {
                    Some(acc) => *acc += &delta,
                    slot @ None => *slot = Some(delta),
                }
            };
            let val = |t: Tensor| &nodes[t.index].value;
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    send(*a, gy.dot(&val(*b).t()));
                    send(*b, val(*a).t().dot(&gy));
                }
                Op::SpMM(m, x) => send(*x, m.transpose().spmm(gy.view())),
                Op::Add(a, b) => {
                    send(*a, gy.clone());
                    send(*b, gy);
                }
                Op::AddBiasRow(x, b) => {
                    send(*b, gy.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    send(*x, gy);
                }
                Op::Hadamard(a, b) => {
                    send(*a, &gy * val(*b));
                    send(*b, &gy * val(*a));
                }
                Op::RowScale(x, c) => {
                    let gc = (&gy * val(*x)).sum_axis(Axis(1)).insert_axis(Axis(1));
                    send(*c, gc);
                    send(*x, &gy * val(*c));
                }
                Op::Scale(a, f) => send(*a, gy * *f),
                Op::GatherRows(x, indices) => {
                    let mut gx = Array2::zeros(val(*x).raw_dim());
                    for (k, &i) in indices.iter().enumerate() {
                        let mut row = gx.row_mut(i);
                        row += &gy.row(k);
                    }
                    send(*x, gx);
                }
                Op::Tanh(a) => {
                    let mut g = gy;
                    Zip::from(&mut g)
                        .and(&node.value)
                        .for_each(|g, &y| *g *= S::one() - y * y);
                    send(*a, g);
                }
                Op::Relu(a) => {
                    let mut g = gy;
                    Zip::from(&mut g).and(val(*a)).for_each(|g, &x| {
                        if x <= S::zero() {
                            *g = S::zero();
                        }
                    });
                    send(*a, g);
                }
                Op::Elu(a) => {
                    let mut g = gy;
                    Zip::from(&mut g).and(val(*a)).and(&node.value).for_each(|g, &x, &y| {
                        if x <= S::zero() {
                            *g *= y + S::one();
                        }
                    });
                    send(*a, g);
                }
                Op::ReduceSum(a) => send(*a, Array2::from_elem(val(*a).raw_dim(), gy[[0, 0]])),
                Op::QuadraticForm(s, m) => {
                    let col = val(*s).column(0).to_vec();
                    let forward = m.matvec(&col);
                    let backward = m.transpose().matvec(&col);
                    let scale = gy[[0, 0]];
                    let g = Array2::from_shape_fn((col.len(), 1), |(i, _)| scale * (forward[i] + backward[i]));
                    send(*s, g);
                }
                Op::SoftmaxCrossEntropy { logits, targets, probs } => {
                    let mut g = probs.clone();
                    for (r, &t) in targets.iter().enumerate() {
                        g[[r, t]] -= S::one();
                    }
                    let scale = gy[[0, 0]] / S::of_usize(targets.len());
                    send(*logits, g * scale);
                }
                Op::GlobalSumPool { x, segments } => {
                    let g = gy.select(Axis(0), segments);
                    send(*x, g);
                }
                Op::Dropout { x, mask } => send(*x, gy * mask),
            }
        }
        Ok(Gradients { tape: self.id, grads })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn hadamard_forward() {
        let mut t = Tape::<f64>::new();
        let a = t.constant(array![[1.0, 2.0]]);
        let b = t.constant(array![[3.0, 4.0]]);
        let c = t.hadamard(a, b).unwrap();
        assert_eq!(t.value(c), &array![[3.0, 8.0]]);
    }

    fn k2() -> Arc<CsrMatrix<f64>> {
        Arc::new(CsrMatrix::from_triplets(2, 2, vec![(0, 1, 1.0), (1, 0, 1.0)]))
    }

    #[test]
    fn quadratic_form_value_and_gradient() {
        let mut t = Tape::<f64>::new();
        let s = t.param(array![[1.0], [-1.0]]);
        let q = t.quadratic_form(s, &k2()).unwrap();
        assert_eq!(t.scalar(q), -2.0);
        let g = t.backward(q).unwrap();
        assert_eq!(g.get(s).unwrap(), &array![[-2.0], [2.0]]);
    }

    #[test]
    fn gather_rows_reorders() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        let y = t.gather_rows(x, &[2, 0]).unwrap();
        assert_eq!(t.value(y), &array![[5.0, 6.0], [1.0, 2.0]]);
        assert!(t.gather_rows(x, &[3]).is_err());
    }

    #[test]
    fn gather_rows_routes_gradient_only_to_gathered_rows() {
        let mut t = Tape::<f64>::new();
        let x = t.param(array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        let y = t.gather_rows(x, &[2, 2, 0]).unwrap();
        let l = t.reduce_sum(y).unwrap();
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(x).unwrap(), &array![[1.0, 1.0], [0.0, 0.0], [2.0, 2.0]]);
    }

    #[test]
    fn hadamard_sum_gradient() {
        let mut t = Tape::<f64>::new();
        let w = t.param(array![[2.0, 3.0]]);
        let x = t.constant(array![[5.0, 7.0]]);
        let h = t.hadamard(w, x).unwrap();
        let l = t.reduce_sum(h).unwrap();
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(w).unwrap(), &array![[5.0, 7.0]]);
        assert!(g.get(x).is_none());
    }

    #[test]
    fn second_backward_is_an_error() {
        let mut t = Tape::<f64>::new();
        let w = t.param(array![[2.0]]);
        let l = t.reduce_sum(w).unwrap();
        t.backward(l).unwrap();
        assert!(matches!(t.backward(l), Err(DiffError::DetachedLoss(_))));
    }

    #[test]
    fn loss_from_another_tape_is_detached() {
        let mut a = Tape::<f64>::new();
        let mut b = Tape::<f64>::new();
        let w = a.param(array![[1.0]]);
        let l = a.reduce_sum(w).unwrap();
        assert!(matches!(b.backward(l), Err(DiffError::DetachedLoss(_))));
        assert_eq!(b.reduce_sum(w), Err(DiffError::ForeignTensor));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut t = Tape::<f64>::new();
        let w = t.param(array![[1.0, 2.0]]);
        assert!(matches!(t.backward(w), Err(DiffError::DetachedLoss(_))));
    }

    #[test]
    fn shape_mismatches() {
        let mut t = Tape::<f64>::new();
        let a = t.constant(Array2::zeros((2, 3)));
        let b = t.constant(Array2::zeros((2, 2)));
        assert!(matches!(
            t.matmul(a, b),
            Err(DiffError::ShapeMismatch { op: "matmul", .. })
        ));
        assert!(matches!(t.add(a, b), Err(DiffError::ShapeMismatch { .. })));
        assert!(matches!(t.add_bias_row(a, b), Err(DiffError::ShapeMismatch { .. })));
        assert!(matches!(
            t.quadratic_form(a, &k2()),
            Err(DiffError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn non_finite_forward_aborts() {
        let mut t = Tape::<f64>::new();
        let a = t.constant(array![[1e300]]);
        assert_eq!(t.scale(a, 1e300), Err(DiffError::NonFinite { op: "scale" }));
    }

    #[test]
    fn cross_entropy_of_uniform_logits() {
        let mut t = Tape::<f64>::new();
        let z = t.param(Array2::zeros((2, 4)));
        let l = t.softmax_cross_entropy(z, &[1, 3]).unwrap();
        assert!((t.scalar(l) - 4f64.ln()).abs() < 1e-15);
        let g = t.backward(l).unwrap();
        assert!((g.get(z).unwrap()[[0, 1]] - (0.25 - 1.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn global_sum_pool_sums_segments() {
        let mut t = Tape::<f64>::new();
        let x = t.param(array![[1.0], [2.0], [4.0]]);
        let y = t.global_sum_pool(x, &[0, 1, 0], 2).unwrap();
        assert_eq!(t.value(y), &array![[5.0], [2.0]]);
    }

    #[test]
    fn dropout_is_reproducible_and_inert_in_eval() {
        let run = |train: bool, step: u64| {
            let mut t = Tape::<f64>::new();
            let x = t.constant(Array2::ones((8, 8)));
            let y = t.dropout(x, 0.5, train, 9, step).unwrap();
            t.value(y).clone()
        };
        assert_eq!(run(true, 1), run(true, 1));
        assert_ne!(run(true, 1), run(true, 2));
        assert_eq!(run(false, 1), Array2::<f64>::ones((8, 8)));
        assert!(run(true, 1).iter().all(|&v| v == 0.0 || v == 2.0));
    }
}
