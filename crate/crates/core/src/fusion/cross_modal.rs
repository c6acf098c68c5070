//! Cross-modal attention fusion of the enhanced color and thermal maps.

use alloc::vec::Vec;

use super::params::CaffmParams;
use crate::error::{shape_mismatch, Result};
use crate::tensor::{
    activate, activate_backward, broadcast_combine, broadcast_combine_backward, conv2d, conv2d_backward,
    global_avg_pool, global_avg_pool_backward, Activation, ChannelVector, Combine, ConvKernel, Tensor,
};

/// `sigmoid(relu(conv(v)))` on a `1x1xC` descriptor.
#[derive(Debug, Clone)]
struct GateTrace {
    input: Tensor,
    pre: Tensor,
    act: Tensor,
    weight: ChannelVector,
}

fn gate_forward(v: &ChannelVector, conv: &ConvKernel) -> Result<GateTrace> {
    let input = v.to_tensor();
    let pre = conv2d(&input, conv, 0)?;
    let act = activate(Activation::Relu, &pre);
    let weight = activate(Activation::Sigmoid, &act).to_channel_vector()?;
    Ok(GateTrace { input, pre, act, weight })
}

fn gate_backward(t: &GateTrace, conv: &ConvKernel, grad: &ChannelVector) -> Result<(ChannelVector, ConvKernel)> {
    let out = t.weight.to_tensor();
    let g_act = activate_backward(Activation::Sigmoid, &t.act, &out, &grad.to_tensor())?;
    let g_pre = activate_backward(Activation::Relu, &t.pre, &t.act, &g_act)?;
    let (g_in, g_conv) = conv2d_backward(&t.input, conv, 0, &g_pre)?;
    Ok((g_in.to_channel_vector()?, g_conv))
}

fn check_channels(op: &'static str, f: &Tensor, channels: usize) -> Result<()> {
    if f.channels() != channels {
        return Err(shape_mismatch(op, alloc::format!("{channels} channels"), f.shape()));
    }
    Ok(())
}

/// Modality attention weights `sigmoid(relu(conv(GAP(f))))` for an
/// enhanced feature map. Entries lie in [0.5, 1), inside (0, 1).
pub fn caffm_cross_weights(f_prime: &Tensor, conv: &ConvKernel) -> Result<ChannelVector> {
    check_channels("caffm_cross_weights", f_prime, conv.in_channels())?;
    Ok(gate_forward(&global_avg_pool(f_prime), conv)?.weight)
}

/// `w_other ⊗ GAP(f_local)`: the local modality's descriptor re-weighted by
/// the other modality's attention.
pub fn caffm_complement(f_local: &Tensor, w_other: &ChannelVector) -> Result<ChannelVector> {
    check_channels("caffm_complement", f_local, w_other.channels())?;
    let v = global_avg_pool(f_local);
    ChannelVector::new(v.data().iter().zip(w_other.data()).map(|(a, b)| a * b).collect())
}

/// Intermediates of [`caffm_fuse`].
#[derive(Debug, Clone)]
pub struct CaffmTrace {
    desc_c: ChannelVector,
    desc_t: ChannelVector,
    gate_t: GateTrace,
    gate_c: GateTrace,
    /// Color descriptor weighted by thermal attention.
    complement_ct: ChannelVector,
    /// Thermal descriptor weighted by color attention.
    complement_tc: ChannelVector,
    gate_g: GateTrace,
    sum: Tensor,
    output: Tensor,
}

impl CaffmTrace {
    pub fn thermal_weights(&self) -> &ChannelVector {
        &self.gate_t.weight
    }

    pub fn color_weights(&self) -> &ChannelVector {
        &self.gate_c.weight
    }

    pub fn complement_color(&self) -> &ChannelVector {
        &self.complement_ct
    }

    pub fn complement_thermal(&self) -> &ChannelVector {
        &self.complement_tc
    }

    pub fn global_weights(&self) -> &ChannelVector {
        &self.gate_g.weight
    }

    pub fn output(&self) -> &Tensor {
        &self.output
    }

    pub(crate) fn signature(&self) -> Vec<usize> {
        [&self.gate_t, &self.gate_c, &self.gate_g]
            .into_iter()
            .flat_map(|g| g.pre.data().iter().map(|&x| usize::from(x > 0.0)))
            .collect()
    }
}

pub fn caffm_forward(f_c_prime: &Tensor, f_t_prime: &Tensor, p: &CaffmParams) -> Result<CaffmTrace> {
    if f_c_prime.shape() != f_t_prime.shape() {
        return Err(shape_mismatch("caffm_fuse", f_c_prime.shape(), f_t_prime.shape()));
    }
    check_channels("caffm_fuse", f_c_prime, p.channels())?;
    let desc_c = global_avg_pool(f_c_prime);
    let desc_t = global_avg_pool(f_t_prime);
    let gate_t = gate_forward(&desc_t, p.conv_t())?;
    let gate_c = gate_forward(&desc_c, p.conv_c())?;
    let complement_ct = caffm_complement(f_c_prime, &gate_t.weight)?;
    let complement_tc = caffm_complement(f_t_prime, &gate_c.weight)?;
    let global =
        ChannelVector::new(complement_ct.data().iter().zip(complement_tc.data()).map(|(a, b)| a + b).collect())?;
    let gate_g = gate_forward(&global, p.conv_g())?;
    let sum = broadcast_combine(f_t_prime, f_c_prime, Combine::Add)?;
    let output = broadcast_combine(&sum, &gate_g.weight, Combine::Mul)?;
    Ok(CaffmTrace { desc_c, desc_t, gate_t, gate_c, complement_ct, complement_tc, gate_g, sum, output })
}

/// Fuses the enhanced maps as `w_ct ⊗ (f_t' ⊕ f_c')`, where `w_ct` is the
/// channel gate computed from the sum of the two cross-weighted
/// descriptors and is broadcast over every position.
pub fn caffm_fuse(f_c_prime: &Tensor, f_t_prime: &Tensor, p: &CaffmParams) -> Result<Tensor> {
    Ok(caffm_forward(f_c_prime, f_t_prime, p)?.output)
}

#[derive(Debug, Clone)]
pub struct CaffmGrads {
    pub f_c_prime: Tensor,
    pub f_t_prime: Tensor,
    pub conv_t: ConvKernel,
    pub conv_c: ConvKernel,
    pub conv_g: ConvKernel,
}

fn hadamard(a: &ChannelVector, b: &ChannelVector) -> Result<ChannelVector> {
    ChannelVector::new(a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect())
}

pub fn caffm_backward(
    t: &CaffmTrace,
    f_c_prime: &Tensor,
    f_t_prime: &Tensor,
    p: &CaffmParams,
    grad: &Tensor,
) -> Result<CaffmGrads> {
    let (g_sum, g_wg) = broadcast_combine_backward(&t.sum, &t.gate_g.weight, Combine::Mul, grad)?;
    let g_wg = g_wg.into_channel().expect("channel operand");
    let (g_global, conv_g) = gate_backward(&t.gate_g, p.conv_g(), &g_wg)?;

    // global = w_t ⊙ desc_c + w_c ⊙ desc_t
    let g_wt = hadamard(&g_global, &t.desc_c)?;
    let g_wc = hadamard(&g_global, &t.desc_t)?;
    let g_desc_c_direct = hadamard(&g_global, &t.gate_t.weight)?;
    let g_desc_t_direct = hadamard(&g_global, &t.gate_c.weight)?;
    let (g_desc_t_gate, conv_t) = gate_backward(&t.gate_t, p.conv_t(), &g_wt)?;
    let (g_desc_c_gate, conv_c) = gate_backward(&t.gate_c, p.conv_c(), &g_wc)?;
    let sum_vec = |a: &ChannelVector, b: &ChannelVector| {
        ChannelVector::new(a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect())
    };
    let g_desc_c = sum_vec(&g_desc_c_direct, &g_desc_c_gate)?;
    let g_desc_t = sum_vec(&g_desc_t_direct, &g_desc_t_gate)?;

    let mut f_c = global_avg_pool_backward(f_c_prime, &g_desc_c)?;
    let mut f_t = global_avg_pool_backward(f_t_prime, &g_desc_t)?;
    for ((c, tt), s) in f_c.data_mut().iter_mut().zip(f_t.data_mut()).zip(g_sum.data()) {
        *c += s;
        *tt += s;
    }
    Ok(CaffmGrads { f_c_prime: f_c, f_t_prime: f_t, conv_t, conv_c, conv_g })
}
