//! Dense double-precision feature maps and the primitives the fusion blocks
//! are built from.
//!
//! Layout is row-major over `(width, height, channels)`: the channel index
//! varies fastest, then height, then width. All ops are pure; every forward
//! op has a matching `*_backward` returning exact analytic gradients.

mod activation;
mod broadcast;
mod conv;
mod linear;
mod norm;
mod pool;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{shape_mismatch, Error, Result};

pub use activation::{activate, activate_backward, sigmoid, Activation, Elementwise};
pub use broadcast::{
    broadcast_combine, broadcast_combine_backward, concat_channels, split_channels, Combine, Operand, OperandGrad,
};
pub use conv::{conv2d, conv2d_backward, same_padding, ConvKernel};
pub use linear::Matrix;
pub use norm::{batchnorm_infer, batchnorm_infer_backward, BatchNormGrad, BatchNormParams};
pub(crate) use pool::{channel_argmax, spatial_argmax};
pub use pool::{
    channel_pool, channel_pool_backward, global_avg_pool, global_avg_pool_backward, global_max_pool,
    global_max_pool_backward, PoolKind,
};

/// Spatial and channel extent of a [`Tensor`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl Shape {
    pub fn new(width: usize, height: usize, channels: usize) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::InvalidDimensions(format!("{width}x{height}x{channels} has a zero extent")));
        }
        Ok(Self { width, height, channels })
    }

    pub fn len(&self) -> usize {
        self.width * self.height * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn positions(&self) -> usize {
        self.width * self.height
    }

    pub fn with_channels(self, channels: usize) -> Self {
        Self { channels, ..self }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.width, self.height, self.channels)
    }
}

fn check_finite(what: &'static str, data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => {
            Err(Error::InvalidParameter { name: what, reason: format!("non-finite value {} at index {i}", data[i]) })
        }
    }
}

/// A `width x height x channels` feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_shape(Shape::new(width, height, channels)?, data)
    }

    pub fn from_shape(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(shape_mismatch("tensor", format!("{} values for {shape}", shape.len()), data.len()));
        }
        check_finite("tensor", &data)?;
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        Self { shape, data: vec![value; shape.len()] }
    }

    /// Builds a tensor by evaluating `f(x, y, c)` at every element.
    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for x in 0..shape.width {
            for y in 0..shape.height {
                for c in 0..shape.channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (x * self.shape.height + y) * self.shape.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y, c)]
    }

    /// Views a single-channel tensor as a spatial map.
    pub fn to_spatial_map(&self) -> Result<SpatialMap> {
        if self.shape.channels != 1 {
            return Err(shape_mismatch("to_spatial_map", "1 channel", self.shape.channels));
        }
        Ok(SpatialMap { width: self.shape.width, height: self.shape.height, data: self.data.clone() })
    }

    /// Views a `1x1xC` tensor as a channel vector.
    pub fn to_channel_vector(&self) -> Result<ChannelVector> {
        if self.shape.positions() != 1 {
            return Err(shape_mismatch("to_channel_vector", "1x1xC", self.shape));
        }
        Ok(ChannelVector { data: self.data.clone() })
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub(crate) fn ensure_shape(&self, op: &'static str, expected: Shape) -> Result<()> {
        if self.shape != expected {
            return Err(shape_mismatch(op, expected, self.shape));
        }
        Ok(())
    }
}

/// A per-channel `1x1xC` weight or descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector {
    data: Vec<f64>,
}

impl ChannelVector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidDimensions("channel vector with zero channels".into()));
        }
        check_finite("channel vector", &data)?;
        Ok(Self { data })
    }

    pub fn filled(channels: usize, value: f64) -> Self {
        Self { data: vec![value; channels] }
    }

    pub fn channels(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// The same values as a `1x1xC` tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor { shape: Shape { width: 1, height: 1, channels: self.data.len() }, data: self.data.clone() }
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A per-position `WxHx1` weight or descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl SpatialMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        let shape = Shape::new(width, height, 1)?;
        if data.len() != shape.len() {
            return Err(shape_mismatch("spatial map", shape.len(), data.len()));
        }
        check_finite("spatial map", &data)?;
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[x * self.height + y]
    }

    /// The same values as a single-channel tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor { shape: Shape { width: self.width, height: self.height, channels: 1 }, data: self.data.clone() }
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}
