use alloc::vec;
use alloc::vec::Vec;

use super::{ChannelVector, SpatialMap, Tensor};
use crate::error::{shape_mismatch, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Avg,
    Max,
}

/// Spatial mean per channel.
pub fn global_avg_pool(input: &Tensor) -> ChannelVector {
    let c = input.channels();
    let mut sums = vec![0.0; c];
    for pos in input.data().chunks_exact(c) {
        for (s, v) in sums.iter_mut().zip(pos) {
            *s += v;
        }
    }
    let n = input.shape().positions() as f64;
    ChannelVector { data: sums.into_iter().map(|s| s / n).collect() }
}

pub fn global_avg_pool_backward(input: &Tensor, grad_out: &ChannelVector) -> Result<Tensor> {
    if grad_out.channels() != input.channels() {
        return Err(shape_mismatch("global_avg_pool_backward", input.channels(), grad_out.channels()));
    }
    let n = input.shape().positions() as f64;
    Ok(Tensor::from_fn(input.shape(), |_, _, c| grad_out.data()[c] / n))
}

/// Flat position index of the first spatial maximum in each channel.
pub(crate) fn spatial_argmax(input: &Tensor) -> Vec<usize> {
    let c = input.channels();
    let mut best = vec![0usize; c];
    for (p, pos) in input.data().chunks_exact(c).enumerate().skip(1) {
        for ch in 0..c {
            if pos[ch] > input.data()[best[ch] * c + ch] {
                best[ch] = p;
            }
        }
    }
    best
}

/// Spatial maximum per channel.
pub fn global_max_pool(input: &Tensor) -> ChannelVector {
    let c = input.channels();
    let idx = spatial_argmax(input);
    ChannelVector { data: (0..c).map(|ch| input.data()[idx[ch] * c + ch]).collect() }
}

/// Routes each channel's gradient to the first position holding its maximum.
pub fn global_max_pool_backward(input: &Tensor, grad_out: &ChannelVector) -> Result<Tensor> {
    let c = input.channels();
    if grad_out.channels() != c {
        return Err(shape_mismatch("global_max_pool_backward", c, grad_out.channels()));
    }
    let mut grad = Tensor::zeros(input.shape());
    for (ch, p) in spatial_argmax(input).into_iter().enumerate() {
        grad.data_mut()[p * c + ch] = grad_out.data()[ch];
    }
    Ok(grad)
}

/// Mean or max across channels at every position.
pub fn channel_pool(input: &Tensor, kind: PoolKind) -> SpatialMap {
    let c = input.channels();
    let data = input
        .data()
        .chunks_exact(c)
        .map(|pos| match kind {
            PoolKind::Avg => pos.iter().sum::<f64>() / c as f64,
            PoolKind::Max => pos.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
        .collect();
    SpatialMap { width: input.width(), height: input.height(), data }
}

/// Index of the first maximal channel at every position.
pub(crate) fn channel_argmax(input: &Tensor) -> Vec<usize> {
    input
        .data()
        .chunks_exact(input.channels())
        .map(|pos| {
            let mut best = 0;
            for (i, &v) in pos.iter().enumerate() {
                if v > pos[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// For `Max`, the gradient goes to the first channel holding the maximum.
pub fn channel_pool_backward(input: &Tensor, kind: PoolKind, grad_out: &SpatialMap) -> Result<Tensor> {
    if grad_out.width() != input.width() || grad_out.height() != input.height() {
        return Err(shape_mismatch(
            "channel_pool_backward",
            input.shape(),
            alloc::format!("{}x{}", grad_out.width(), grad_out.height()),
        ));
    }
    let c = input.channels();
    let mut grad = Tensor::zeros(input.shape());
    match kind {
        PoolKind::Avg => {
            for (gpos, &g) in grad.data_mut().chunks_exact_mut(c).zip(grad_out.data()) {
                gpos.iter_mut().for_each(|v| *v = g / c as f64);
            }
        }
        PoolKind::Max => {
            let best = channel_argmax(input);
            for ((gpos, &g), b) in grad.data_mut().chunks_exact_mut(c).zip(grad_out.data()).zip(best) {
                gpos[b] = g;
            }
        }
    }
    Ok(grad)
}
