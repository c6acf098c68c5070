//! Seeded pseudorandom values for demos and tests.
//!
//! All randomness in the crate flows through a [`ChaCha8Rng`] built from an
//! explicit seed, so identical seeds reproduce identical tensors on every
//! platform.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
pub use rand_chacha::ChaCha8Rng;

use crate::tensor::{ConvKernel, Matrix, Shape, Tensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` values drawn uniformly from `[-scale, scale)`.
pub fn uniform(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

pub fn random_tensor(rng: &mut impl Rng, shape: Shape, scale: f64) -> Tensor {
    Tensor::from_shape(shape, uniform(rng, shape.len(), scale)).expect("length matches shape")
}

/// Weights and bias uniform in `±1/sqrt(fan_in)`, `fan_in = size² · in`.
pub fn random_kernel(rng: &mut impl Rng, size: usize, in_channels: usize, out_channels: usize) -> ConvKernel {
    let bound = 1.0 / libm::sqrt((size * size * in_channels) as f64);
    let weights = uniform(rng, size * size * in_channels * out_channels, bound);
    let bias = uniform(rng, out_channels, bound);
    ConvKernel::new(size, in_channels, out_channels, weights, bias).expect("odd size, matching counts")
}

/// Entries uniform in `±1/sqrt(rows)`.
pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    let bound = 1.0 / libm::sqrt(rows as f64);
    Matrix::new(rows, cols, uniform(rng, rows * cols, bound)).expect("positive dims")
}
