use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::Tensor;
use crate::error::{shape_mismatch, Error, Result};

/// Inference-mode batch normalization with frozen statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams {
    gamma: Vec<f64>,
    beta: Vec<f64>,
    running_mean: Vec<f64>,
    running_var: Vec<f64>,
    epsilon: f64,
}

impl BatchNormParams {
    /// Requires equal-length vectors, non-negative variances and
    /// `var + epsilon > 0` for every channel. `epsilon` itself may be zero.
    pub fn new(
        gamma: Vec<f64>,
        beta: Vec<f64>,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
        epsilon: f64,
    ) -> Result<Self> {
        let c = gamma.len();
        if c == 0 {
            return Err(Error::InvalidDimensions("batch norm with zero channels".into()));
        }
        for (name, v) in [("beta", &beta), ("running_mean", &running_mean), ("running_var", &running_var)] {
            if v.len() != c {
                return Err(Error::InvalidParameter {
                    name: "batch_norm",
                    reason: format!("{name} has {} entries, gamma has {c}", v.len()),
                });
            }
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "batch_norm.epsilon",
                reason: format!("{epsilon} is not a finite non-negative value"),
            });
        }
        if let Some(v) = running_var.iter().find(|&&v| v.is_nan() || v < 0.0 || v + epsilon <= 0.0) {
            return Err(Error::InvalidParameter {
                name: "batch_norm.running_var",
                reason: format!("variance {v} with epsilon {epsilon} is not positive"),
            });
        }
        if gamma.iter().chain(&beta).chain(&running_mean).chain(&running_var).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter { name: "batch_norm", reason: "non-finite value".into() });
        }
        Ok(Self { gamma, beta, running_mean, running_var, epsilon })
    }

    /// gamma = 1, beta = 0, mean = 0, var = 1.
    pub fn identity(channels: usize, epsilon: f64) -> Result<Self> {
        Self::new(vec![1.0; channels], vec![0.0; channels], vec![0.0; channels], vec![1.0; channels], epsilon)
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn running_mean(&self) -> &[f64] {
        &self.running_mean
    }

    pub fn running_var(&self) -> &[f64] {
        &self.running_var
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn gamma_mut(&mut self) -> &mut [f64] {
        &mut self.gamma
    }

    pub fn beta_mut(&mut self) -> &mut [f64] {
        &mut self.beta
    }

    pub fn running_mean_mut(&mut self) -> &mut [f64] {
        &mut self.running_mean
    }

    /// Callers must keep `var + epsilon > 0`.
    pub fn running_var_mut(&mut self) -> &mut [f64] {
        &mut self.running_var
    }

    fn inv_std(&self, c: usize) -> f64 {
        1.0 / libm::sqrt(self.running_var[c] + self.epsilon)
    }
}

/// Gradients of [`batchnorm_infer`] for the input and every statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormGrad {
    pub input: Tensor,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

fn check(input: &Tensor, params: &BatchNormParams) -> Result<()> {
    if input.channels() != params.channels() {
        return Err(shape_mismatch("batchnorm_infer", format!("{} channels", params.channels()), input.shape()));
    }
    Ok(())
}

/// `gamma * (x - mean) / sqrt(var + eps) + beta`, per channel.
pub fn batchnorm_infer(input: &Tensor, params: &BatchNormParams) -> Result<Tensor> {
    check(input, params)?;
    let c = params.channels();
    let scale: Vec<f64> = (0..c).map(|i| params.gamma[i] * params.inv_std(i)).collect();
    let mut out = input.clone();
    for pos in out.data_mut().chunks_exact_mut(c) {
        for (i, v) in pos.iter_mut().enumerate() {
            *v = scale[i] * (*v - params.running_mean[i]) + params.beta[i];
        }
    }
    Ok(out)
}

pub fn batchnorm_infer_backward(input: &Tensor, params: &BatchNormParams, grad_out: &Tensor) -> Result<BatchNormGrad> {
    check(input, params)?;
    grad_out.ensure_shape("batchnorm_infer_backward", input.shape())?;
    let c = params.channels();
    let mut gamma = vec![0.0; c];
    let mut beta = vec![0.0; c];
    let mut centered_sum = vec![0.0; c];
    let mut grad_in = grad_out.clone();
    for (pos, (g, x)) in
        grad_in.data_mut().chunks_exact_mut(c).zip(grad_out.data().chunks_exact(c).zip(input.data().chunks_exact(c)))
    {
        for i in 0..c {
            let inv = params.inv_std(i);
            let centered = x[i] - params.running_mean[i];
            beta[i] += g[i];
            gamma[i] += g[i] * centered * inv;
            centered_sum[i] += g[i] * centered;
            pos[i] = g[i] * params.gamma[i] * inv;
        }
    }
    let running_mean = (0..c).map(|i| -params.gamma[i] * params.inv_std(i) * beta[i]).collect();
    let running_var = (0..c)
        .map(|i| {
            let inv = params.inv_std(i);
            -0.5 * params.gamma[i] * inv * inv * inv * centered_sum[i]
        })
        .collect();
    Ok(BatchNormGrad { input: grad_in, gamma, beta, running_mean, running_var })
}
