#![allow(dead_code)]

use mspd_core::init::{random_tensor, rng, ChaCha8Rng};
use mspd_core::tensor::{Shape, Tensor};

pub const STEP: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-5;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    rng(seed)
}

pub fn shape(w: usize, h: usize, c: usize) -> Shape {
    Shape::new(w, h, c).unwrap()
}

pub fn rand_tensor(r: &mut ChaCha8Rng, s: Shape) -> Tensor {
    random_tensor(r, s, 1.0)
}

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn numeric_gradient(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + STEP;
            let plus = f(&probe);
            probe[i] = orig - STEP;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * STEP)
        })
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-3)).fold(0.0, f64::max)
}

pub fn assert_grad_close(what: &str, analytic: &[f64], numeric: &[f64]) {
    let err = max_rel_error(analytic, numeric);
    assert!(err < TOLERANCE, "{what}: max relative error {err:e}");
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
