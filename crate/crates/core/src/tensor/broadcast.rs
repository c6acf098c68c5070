use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{ChannelVector, Shape, SpatialMap, Tensor};
use crate::error::{shape_mismatch, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combine {
    Mul,
    Add,
}

impl Combine {
    #[inline]
    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            Combine::Mul => a * b,
            Combine::Add => a + b,
        }
    }
}

/// Right-hand side of [`broadcast_combine`].
///
/// A channel vector is repeated over every position; a spatial map is
/// repeated over every channel.
#[derive(Debug, Clone, Copy)]
pub enum Operand<'a> {
    Full(&'a Tensor),
    Channel(&'a ChannelVector),
    Spatial(&'a SpatialMap),
}

impl<'a> From<&'a Tensor> for Operand<'a> {
    fn from(t: &'a Tensor) -> Self {
        Operand::Full(t)
    }
}

impl<'a> From<&'a ChannelVector> for Operand<'a> {
    fn from(v: &'a ChannelVector) -> Self {
        Operand::Channel(v)
    }
}

impl<'a> From<&'a SpatialMap> for Operand<'a> {
    fn from(m: &'a SpatialMap) -> Self {
        Operand::Spatial(m)
    }
}

/// Gradient for an [`Operand`], reduced back to the operand's own shape.
#[derive(Debug, Clone, PartialEq)]
pub enum OperandGrad {
    Full(Tensor),
    Channel(ChannelVector),
    Spatial(SpatialMap),
}

impl OperandGrad {
    pub fn into_tensor(self) -> Option<Tensor> {
        match self {
            OperandGrad::Full(t) => Some(t),
            _ => None,
        }
    }

    pub fn into_channel(self) -> Option<ChannelVector> {
        match self {
            OperandGrad::Channel(v) => Some(v),
            _ => None,
        }
    }

    pub fn into_spatial(self) -> Option<SpatialMap> {
        match self {
            OperandGrad::Spatial(m) => Some(m),
            _ => None,
        }
    }
}

/// Value of the operand broadcast to element `i` of a tensor with `shape`.
#[inline]
fn broadcast_at(b: &Operand<'_>, shape: Shape, i: usize) -> f64 {
    match b {
        Operand::Full(t) => t.data()[i],
        Operand::Channel(v) => v.data()[i % shape.channels],
        Operand::Spatial(m) => m.data()[i / shape.channels],
    }
}

fn check(op: &'static str, a: &Tensor, b: &Operand<'_>) -> Result<()> {
    let s = a.shape();
    match b {
        Operand::Full(t) if t.shape() != s => Err(shape_mismatch(op, s, t.shape())),
        Operand::Channel(v) if v.channels() != s.channels => {
            Err(shape_mismatch(op, format!("{} channels", s.channels), v.channels()))
        }
        Operand::Spatial(m) if m.width() != s.width || m.height() != s.height => {
            Err(shape_mismatch(op, format!("{}x{}", s.width, s.height), format!("{}x{}", m.width(), m.height())))
        }
        _ => Ok(()),
    }
}

/// Element-wise product or sum of `a` with a full-shape or broadcast operand.
pub fn broadcast_combine<'b>(a: &Tensor, b: impl Into<Operand<'b>>, op: Combine) -> Result<Tensor> {
    let b = b.into();
    check("broadcast_combine", a, &b)?;
    let s = a.shape();
    let data = a.data().iter().enumerate().map(|(i, &x)| op.apply(x, broadcast_at(&b, s, i))).collect();
    Tensor::from_shape(s, data)
}

/// Gradients for both operands; the second is summed over its broadcast axes.
pub fn broadcast_combine_backward<'b>(
    a: &Tensor,
    b: impl Into<Operand<'b>>,
    op: Combine,
    grad_out: &Tensor,
) -> Result<(Tensor, OperandGrad)> {
    let b = b.into();
    check("broadcast_combine_backward", a, &b)?;
    grad_out.ensure_shape("broadcast_combine_backward", a.shape())?;
    let s = a.shape();
    let g = grad_out.data();
    let grad_a = match op {
        Combine::Add => grad_out.clone(),
        Combine::Mul => {
            let data = g.iter().enumerate().map(|(i, &gv)| gv * broadcast_at(&b, s, i)).collect();
            Tensor::from_shape(s, data)?
        }
    };
    // d(out_i)/d(b_j) for the element of b that feeds out_i
    let local = |i: usize| match op {
        Combine::Add => g[i],
        Combine::Mul => g[i] * a.data()[i],
    };
    let grad_b = match b {
        Operand::Full(_) => OperandGrad::Full(Tensor::from_shape(s, (0..s.len()).map(local).collect())?),
        Operand::Channel(_) => {
            let mut acc = vec![0.0; s.channels];
            for i in 0..s.len() {
                acc[i % s.channels] += local(i);
            }
            OperandGrad::Channel(ChannelVector::new(acc)?)
        }
        Operand::Spatial(_) => {
            let mut acc = vec![0.0; s.positions()];
            for i in 0..s.len() {
                acc[i / s.channels] += local(i);
            }
            OperandGrad::Spatial(SpatialMap::new(s.width, s.height, acc)?)
        }
    };
    Ok((grad_a, grad_b))
}

/// Stacks `b`'s channels after `a`'s at every position.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(shape_mismatch("concat_channels", a.shape(), b.shape()));
    }
    let (ca, cb) = (a.channels(), b.channels());
    let mut data = Vec::with_capacity(a.data().len() + b.data().len());
    for (pa, pb) in a.data().chunks_exact(ca).zip(b.data().chunks_exact(cb)) {
        data.extend_from_slice(pa);
        data.extend_from_slice(pb);
    }
    Tensor::from_shape(a.shape().with_channels(ca + cb), data)
}

/// Inverse of [`concat_channels`]: the first `at` channels and the rest.
pub fn split_channels(t: &Tensor, at: usize) -> Result<(Tensor, Tensor)> {
    let c = t.channels();
    if at == 0 || at >= c {
        return Err(shape_mismatch("split_channels", format!("split inside 1..{c}"), at));
    }
    let mut left = Vec::with_capacity(t.shape().positions() * at);
    let mut right = Vec::with_capacity(t.shape().positions() * (c - at));
    for pos in t.data().chunks_exact(c) {
        left.extend_from_slice(&pos[..at]);
        right.extend_from_slice(&pos[at..]);
    }
    Ok((
        Tensor::from_shape(t.shape().with_channels(at), left)?,
        Tensor::from_shape(t.shape().with_channels(c - at), right)?,
    ))
}
