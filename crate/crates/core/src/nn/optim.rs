use ndarray::{Array2, Zip};

use super::params::ParamStore;
use super::{NnError, Result};
use crate::Scalar;

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<S> {
    lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Array2<S>>,
    v: Vec<Array2<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(lr: f64, store: &ParamStore<S>) -> Self {
        let zeros: Vec<Array2<S>> = store.values().iter().map(|p| Array2::zeros(p.dim())).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore<S>, grads: &[Array2<S>]) -> Result<()> {
        if grads.len() != self.m.len() || store.len() != self.m.len() {
            return Err(NnError::InvalidConfig(format!(
                "optimizer tracks {} parameters, got {} gradients",
                self.m.len(),
                grads.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            if g.dim() != self.m[i].dim() || store.values()[i].dim() != g.dim() {
                return Err(NnError::ShapeMismatch {
                    name: store.names()[i].clone(),
                    expected: self.m[i].dim(),
                    got: g.dim(),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (S::of(self.beta1), S::of(self.beta2));
        let c1 = S::of(1.0 - self.beta1.powi(t));
        let c2 = S::of(1.0 - self.beta2.powi(t));
        let (lr, eps) = (S::of(self.lr), S::of(self.eps));
        let one = S::one();
        for ((p, g), (m, v)) in store
            .values_mut()
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            });
        }
        Ok(())
    }
}

/// Multiplies the learning rate by `factor` once the metric has failed to
/// improve strictly for `patience` consecutive calls.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    pub factor: f64,
    pub patience: usize,
    lr: f64,
    best: Option<f64>,
    stale: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(NnError::InvalidConfig(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        if !(factor > 0.0 && factor < 1.0) {
            return Err(NnError::InvalidConfig(format!(
                "factor must lie in (0, 1), got {factor}"
            )));
        }
        Ok(Self {
            factor,
            patience,
            lr,
            best: None,
            stale: 0,
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    /// Feeds one metric value and returns the learning rate to use next.
    pub fn step(&mut self, metric: f64) -> f64 {
        match self.best {
            Some(best) if metric >= best || metric.is_nan() => {
                self.stale += 1;
                if self.stale >= self.patience {
                    self.lr *= self.factor;
                    self.stale = 0;
                }
            }
            _ => {
                self.best = Some(metric);
                self.stale = 0;
            }
        }
        self.lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn scalar_store(w: f64) -> ParamStore<f64> {
        let mut store = ParamStore::new();
        store.add("w", array![[w]]);
        store
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut store = scalar_store(1.5);
        let mut adam = Adam::new(0.1, &store);
        for _ in 0..3 {
            adam.step(&mut store, &[array![[0.0]]]).unwrap();
        }
        assert_eq!(store.values()[0], array![[1.5]]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut store = scalar_store(1.0);
        let mut adam = Adam::new(0.1, &store);
        adam.step(&mut store, &[array![[1.0]]]).unwrap();
        let expected = 1.0 - 0.1 * (1.0 / (1.0 + 1e-8));
        assert!((store.values()[0][[0, 0]] - expected).abs() < 1e-12);
    }

    #[test]
    fn minimizes_square() {
        let mut store = scalar_store(3.0);
        let mut adam = Adam::new(0.05, &store);
        for _ in 0..500 {
            let w = store.values()[0][[0, 0]];
            adam.step(&mut store, &[array![[2.0 * w]]]).unwrap();
        }
        assert!(store.values()[0][[0, 0]].abs() < 1e-2);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut store = scalar_store(1.0);
        let mut adam = Adam::new(0.1, &store);
        let err = adam.step(&mut store, &[array![[1.0, 2.0]]]).unwrap_err();
        assert!(matches!(err, NnError::ShapeMismatch { .. }));
    }

    #[test]
    fn decreasing_metric_keeps_lr() {
        let mut sched = PlateauScheduler::new(1.0, 0.8, 3).unwrap();
        for i in 0..20 {
            assert_eq!(sched.step(-(i as f64)), 1.0);
        }
    }

    #[test]
    fn constant_metric_reduces() {
        let patience = 5;
        let mut sched = PlateauScheduler::new(1.0, 0.8, patience).unwrap();
        for _ in 0..patience + 1 {
            sched.step(0.5);
        }
        assert!((sched.lr() - 0.8).abs() < 1e-15);
        for _ in 0..patience + 1 {
            sched.step(0.5);
        }
        assert!((sched.lr() - 0.64).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_factor() {
        assert!(PlateauScheduler::new(1.0, 1.0, 3).is_err());
        assert!(PlateauScheduler::new(0.0, 0.5, 3).is_err());
    }
}
