use alloc::vec::Vec;

use super::cross_modal::{caffm_backward, caffm_forward, CaffmTrace};
use super::enhancement::{ciem_backward, ciem_forward, CiemTrace};
use super::params::{FusionParams, ParamGrads, ParamGroup};
use crate::error::Result;
use crate::tensor::{ConvKernel, Tensor};

/// Intermediates of the full enhancement + fusion pipeline.
#[derive(Debug, Clone)]
pub struct FusionTrace {
    pub ciem: CiemTrace,
    pub caffm: CaffmTrace,
}

impl FusionTrace {
    pub fn output(&self) -> &Tensor {
        self.caffm.output()
    }

    pub(crate) fn signature(&self) -> Vec<usize> {
        let mut s = self.ciem.signature();
        s.extend(self.caffm.signature());
        s
    }
}

pub fn fusion_trace(f_c: &Tensor, f_t: &Tensor, p: &FusionParams) -> Result<FusionTrace> {
    let ciem = ciem_forward(f_c, f_t, p.ciem())?;
    let caffm = caffm_forward(ciem.enhanced_color(), ciem.enhanced_thermal(), p.caffm())?;
    Ok(FusionTrace { ciem, caffm })
}

/// Enhancement followed by cross-modal fusion; returns the fused `WxHxC` map.
pub fn fusion_forward(f_c: &Tensor, f_t: &Tensor, p: &FusionParams) -> Result<Tensor> {
    Ok(fusion_trace(f_c, f_t, p)?.caffm.output().clone())
}

/// Gradients of `<grad_out, fusion_forward(f_c, f_t, p)>`.
#[derive(Debug, Clone)]
pub struct FusionGrads {
    pub f_c: Tensor,
    pub f_t: Tensor,
    pub params: ParamGrads,
}

fn store_kernel(grads: &mut ParamGrads, weight: ParamGroup, bias: ParamGroup, k: ConvKernel) {
    grads.set(weight, k.weights().to_vec());
    grads.set(bias, k.bias().to_vec());
}

pub fn fusion_backward(f_c: &Tensor, f_t: &Tensor, p: &FusionParams, grad_out: &Tensor) -> Result<FusionGrads> {
    let trace = fusion_trace(f_c, f_t, p)?;
    grad_out.ensure_shape("fusion_backward", trace.output().shape())?;
    let cg =
        caffm_backward(&trace.caffm, trace.ciem.enhanced_color(), trace.ciem.enhanced_thermal(), p.caffm(), grad_out)?;
    let eg = ciem_backward(&trace.ciem, p.ciem(), &cg.f_c_prime, &cg.f_t_prime)?;

    let mut params = ParamGrads::zeros_like(p);
    store_kernel(&mut params, ParamGroup::Conv1Weight, ParamGroup::Conv1Bias, eg.conv1);
    store_kernel(&mut params, ParamGroup::Conv3Weight, ParamGroup::Conv3Bias, eg.conv3);
    params.set(ParamGroup::BnGamma, eg.bn.gamma);
    params.set(ParamGroup::BnBeta, eg.bn.beta);
    params.set(ParamGroup::BnMean, eg.bn.running_mean);
    params.set(ParamGroup::BnVar, eg.bn.running_var);
    params.set(ParamGroup::CamW1, eg.cam_w1.data().to_vec());
    params.set(ParamGroup::CamW2, eg.cam_w2.data().to_vec());
    store_kernel(&mut params, ParamGroup::PamWeight, ParamGroup::PamBias, eg.pam_conv);
    store_kernel(&mut params, ParamGroup::ConvTWeight, ParamGroup::ConvTBias, cg.conv_t);
    store_kernel(&mut params, ParamGroup::ConvCWeight, ParamGroup::ConvCBias, cg.conv_c);
    store_kernel(&mut params, ParamGroup::ConvGWeight, ParamGroup::ConvGBias, cg.conv_g);
    Ok(FusionGrads { f_c: eg.f_c, f_t: eg.f_t, params })
}
