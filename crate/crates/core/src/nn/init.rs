use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Scalar;

/// Glorot-uniform matrix: entries uniform in `±sqrt(6 / (rows + cols))`.
pub fn glorot_init<S: Scalar>(rows: usize, cols: usize, seed: u64) -> Array2<S> {
    glorot_with(&mut ChaCha8Rng::seed_from_u64(seed), rows, cols)
}

pub fn glorot_with<S: Scalar, R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Array2<S> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || S::of(rng.random_range(-bound..=bound)))
}
