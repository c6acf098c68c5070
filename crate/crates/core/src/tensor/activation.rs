use alloc::vec::Vec;

use super::{ChannelVector, SpatialMap, Tensor};
use crate::error::{shape_mismatch, Result};

/// Value containers that element-wise ops can rebuild with new values.
pub trait Elementwise: Sized {
    fn values(&self) -> &[f64];

    /// A container of identical shape holding `values`.
    fn with_values(&self, values: Vec<f64>) -> Self;

    fn shape_label(&self) -> alloc::string::String;
}

impl Elementwise for Tensor {
    fn values(&self) -> &[f64] {
        self.data()
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.data().len());
        Tensor { shape: self.shape(), data: values }
    }

    fn shape_label(&self) -> alloc::string::String {
        alloc::format!("{}", self.shape())
    }
}

impl Elementwise for ChannelVector {
    fn values(&self) -> &[f64] {
        self.data()
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.data().len());
        ChannelVector { data: values }
    }

    fn shape_label(&self) -> alloc::string::String {
        alloc::format!("1x1x{}", self.channels())
    }
}

impl Elementwise for SpatialMap {
    fn values(&self) -> &[f64] {
        self.data()
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.data().len());
        SpatialMap { width: self.width(), height: self.height(), data: values }
    }

    fn shape_label(&self) -> alloc::string::String {
        alloc::format!("{}x{}x1", self.width(), self.height())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

/// Logistic function, clamped so the result stays strictly inside (0, 1)
/// even where the exact value rounds to 0 or 1 in double precision.
pub fn sigmoid(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative at `input`, given `output = apply(input)`.
    ///
    /// ReLU uses 0 as its subgradient at the origin.
    pub fn derivative(self, input: f64, output: f64) -> f64 {
        match self {
            Activation::Relu => {
                if input > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => output * (1.0 - output),
        }
    }
}

pub fn activate<T: Elementwise>(kind: Activation, input: &T) -> T {
    input.with_values(input.values().iter().map(|&x| kind.apply(x)).collect())
}

/// Chains `grad_out` through the activation; `output` is the forward result.
pub fn activate_backward<T: Elementwise>(kind: Activation, input: &T, output: &T, grad_out: &T) -> Result<T> {
    let n = input.values().len();
    if output.values().len() != n || grad_out.values().len() != n {
        return Err(shape_mismatch("activate_backward", input.shape_label(), grad_out.shape_label()));
    }
    Ok(input.with_values(
        input
            .values()
            .iter()
            .zip(output.values())
            .zip(grad_out.values())
            .map(|((&x, &y), &g)| g * kind.derivative(x, y))
            .collect(),
    ))
}
