use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{Shape, Tensor};
use crate::error::{shape_mismatch, Error, Result};

/// Square convolution filter bank with stride 1.
///
/// Weights are laid out `(size, size, in_channels, out_channels)` with the
/// output channel varying fastest; the first kernel axis runs along width.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    size: usize,
    in_channels: usize,
    out_channels: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl ConvKernel {
    pub fn new(
        size: usize,
        in_channels: usize,
        out_channels: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if size.is_multiple_of(2) {
            return Err(Error::InvalidKernel(format!("kernel size {size} is not odd")));
        }
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::InvalidKernel(format!("channel counts {in_channels}->{out_channels} must be positive")));
        }
        let expected = size * size * in_channels * out_channels;
        if weights.len() != expected {
            return Err(Error::InvalidKernel(format!(
                "{size}x{size}x{in_channels}x{out_channels} kernel needs {expected} weights, got {}",
                weights.len()
            )));
        }
        if bias.len() != out_channels {
            return Err(Error::InvalidKernel(format!("bias needs {out_channels} values, got {}", bias.len())));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidKernel("non-finite weight or bias".into()));
        }
        Ok(Self { size, in_channels, out_channels, weights, bias })
    }

    pub fn zeros(size: usize, in_channels: usize, out_channels: usize) -> Result<Self> {
        Self::new(
            size,
            in_channels,
            out_channels,
            vec![0.0; size * size * in_channels * out_channels],
            vec![0.0; out_channels],
        )
    }

    /// A 1x1 kernel mapping every channel onto itself.
    pub fn identity(channels: usize) -> Result<Self> {
        let mut k = Self::zeros(1, channels, channels)?;
        for c in 0..channels {
            k.weights[c * channels + c] = 1.0;
        }
        Ok(k)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// `[size, size, in, out]`.
    pub fn dims(&self) -> [usize; 4] {
        [self.size, self.size, self.in_channels, self.out_channels]
    }

    #[inline]
    pub fn weight_index(&self, kx: usize, ky: usize, ci: usize, co: usize) -> usize {
        ((kx * self.size + ky) * self.in_channels + ci) * self.out_channels + co
    }

    #[inline]
    pub fn weight(&self, kx: usize, ky: usize, ci: usize, co: usize) -> f64 {
        self.weights[self.weight_index(kx, ky, ci, co)]
    }
}

/// Padding that keeps the spatial extent unchanged at stride 1.
pub fn same_padding(kernel: &ConvKernel) -> usize {
    (kernel.size - 1) / 2
}

fn output_shape(input: Shape, kernel: &ConvKernel, padding: usize) -> Result<Shape> {
    if input.channels != kernel.in_channels {
        return Err(shape_mismatch("conv2d", format!("{} input channels", kernel.in_channels), input));
    }
    let span = |extent: usize| (extent + 2 * padding).checked_sub(kernel.size - 1).filter(|&n| n > 0);
    match (span(input.width), span(input.height)) {
        (Some(w), Some(h)) => Ok(Shape { width: w, height: h, channels: kernel.out_channels }),
        _ => Err(shape_mismatch("conv2d", format!("spatial extent covering a {0}x{0} kernel", kernel.size), input)),
    }
}

/// Calls `f(out_x, out_y, in_x, in_y, kx, ky)` for every kernel tap that
/// lands inside the input; taps on the zero padding are skipped.
#[inline]
fn for_each_tap(
    input: Shape,
    out: Shape,
    size: usize,
    padding: usize,
    mut f: impl FnMut(usize, usize, usize, usize, usize, usize),
) {
    for ox in 0..out.width {
        for oy in 0..out.height {
            for kx in 0..size {
                let Some(ix) = (ox + kx).checked_sub(padding).filter(|&i| i < input.width) else {
                    continue;
                };
                for ky in 0..size {
                    let Some(iy) = (oy + ky).checked_sub(padding).filter(|&i| i < input.height) else {
                        continue;
                    };
                    f(ox, oy, ix, iy, kx, ky);
                }
            }
        }
    }
}

/// Stride-1 zero-padded cross-correlation plus bias.
pub fn conv2d(input: &Tensor, kernel: &ConvKernel, padding: usize) -> Result<Tensor> {
    let out_shape = output_shape(input.shape(), kernel, padding)?;
    let (cin, cout) = (kernel.in_channels, kernel.out_channels);
    let mut out = Tensor::from_fn(out_shape, |_, _, co| kernel.bias[co]);
    let x = input.data();
    let w = &kernel.weights;
    let (in_h, out_h) = (input.height(), out_shape.height);
    for_each_tap(input.shape(), out_shape, kernel.size, padding, |ox, oy, ix, iy, kx, ky| {
        let src = (ix * in_h + iy) * cin;
        let dst = (ox * out_h + oy) * cout;
        let wbase = (kx * kernel.size + ky) * cin * cout;
        for ci in 0..cin {
            let v = x[src + ci];
            let row = &w[wbase + ci * cout..wbase + (ci + 1) * cout];
            for (o, &wv) in out.data_mut()[dst..dst + cout].iter_mut().zip(row) {
                *o += v * wv;
            }
        }
    });
    Ok(out)
}

/// Gradients of [`conv2d`] with respect to its input and kernel.
///
/// The kernel gradient is returned in a [`ConvKernel`] of the same shape.
pub fn conv2d_backward(
    input: &Tensor,
    kernel: &ConvKernel,
    padding: usize,
    grad_out: &Tensor,
) -> Result<(Tensor, ConvKernel)> {
    let out_shape = output_shape(input.shape(), kernel, padding)?;
    grad_out.ensure_shape("conv2d_backward", out_shape)?;
    let (cin, cout) = (kernel.in_channels, kernel.out_channels);
    let mut grad_in = vec![0.0; input.shape().len()];
    let mut grad_w = vec![0.0; kernel.weights.len()];
    let mut grad_b = vec![0.0; cout];
    let g = grad_out.data();
    for pos in g.chunks_exact(cout) {
        for (b, &gv) in grad_b.iter_mut().zip(pos) {
            *b += gv;
        }
    }
    let x = input.data();
    let w = &kernel.weights;
    let (in_h, out_h) = (input.height(), out_shape.height);
    for_each_tap(input.shape(), out_shape, kernel.size, padding, |ox, oy, ix, iy, kx, ky| {
        let src = (ix * in_h + iy) * cin;
        let dst = (ox * out_h + oy) * cout;
        let wbase = (kx * kernel.size + ky) * cin * cout;
        let gpos = &g[dst..dst + cout];
        for ci in 0..cin {
            let wrow = wbase + ci * cout;
            let mut acc = 0.0;
            for co in 0..cout {
                acc += gpos[co] * w[wrow + co];
                grad_w[wrow + co] += gpos[co] * x[src + ci];
            }
            grad_in[src + ci] += acc;
        }
    });
    let grad_kernel =
        ConvKernel { size: kernel.size, in_channels: cin, out_channels: cout, weights: grad_w, bias: grad_b };
    Ok((Tensor::from_shape(input.shape(), grad_in)?, grad_kernel))
}
