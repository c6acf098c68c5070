//! Cascaded information enhancement: fuse, attend, re-weight each modality.

use alloc::vec::Vec;

use super::params::CiemParams;
use crate::error::{shape_mismatch, Result};
use crate::tensor::{
    activate, activate_backward, batchnorm_infer, batchnorm_infer_backward, broadcast_combine,
    broadcast_combine_backward, channel_argmax, channel_pool, channel_pool_backward, concat_channels, conv2d,
    conv2d_backward, global_avg_pool, global_avg_pool_backward, global_max_pool, global_max_pool_backward,
    same_padding, spatial_argmax, split_channels, Activation, BatchNormGrad, ChannelVector, Combine, ConvKernel,
    Matrix, PoolKind, SpatialMap, Tensor,
};

fn check_pair(op: &'static str, f_c: &Tensor, f_t: &Tensor, p: &CiemParams) -> Result<()> {
    if f_c.shape() != f_t.shape() {
        return Err(shape_mismatch(op, f_c.shape(), f_t.shape()));
    }
    check_channels(op, f_c, p)
}

fn check_channels(op: &'static str, f: &Tensor, p: &CiemParams) -> Result<()> {
    if f.channels() != p.channels() {
        return Err(shape_mismatch(op, alloc::format!("{} channels", p.channels()), f.shape()));
    }
    Ok(())
}

#[derive(Debug, Clone)]
struct FuseTrace {
    cat: Tensor,
    reduced: Tensor,
    spread: Tensor,
    normed: Tensor,
    fused: Tensor,
}

fn fuse_forward(f_c: &Tensor, f_t: &Tensor, p: &CiemParams) -> Result<FuseTrace> {
    let cat = concat_channels(f_c, f_t)?;
    let reduced = conv2d(&cat, p.conv1(), 0)?;
    let spread = conv2d(&reduced, p.conv3(), same_padding(p.conv3()))?;
    let normed = batchnorm_infer(&spread, p.bn())?;
    let fused = activate(Activation::Relu, &normed);
    Ok(FuseTrace { cat, reduced, spread, normed, fused })
}

/// `ReLU(BN(Conv3x3(Conv1x1([f_c, f_t]))))`, a `WxHxC` map with no negative
/// entries.
pub fn ciem_fuse(f_c: &Tensor, f_t: &Tensor, p: &CiemParams) -> Result<Tensor> {
    check_pair("ciem_fuse", f_c, f_t, p)?;
    Ok(fuse_forward(f_c, f_t, p)?.fused)
}

#[derive(Debug, Clone)]
struct MlpTrace {
    input: ChannelVector,
    hidden: ChannelVector,
    act: ChannelVector,
    out: ChannelVector,
}

fn mlp_forward(d: ChannelVector, w1: &Matrix, w2: &Matrix) -> Result<MlpTrace> {
    let hidden = w1.apply(&d)?;
    let act = activate(Activation::Relu, &hidden);
    let out = w2.apply(&act)?;
    Ok(MlpTrace { input: d, hidden, act, out })
}

fn mlp_backward(
    t: &MlpTrace,
    w1: &Matrix,
    w2: &Matrix,
    grad: &ChannelVector,
) -> Result<(ChannelVector, Matrix, Matrix)> {
    let (g_act, g_w2) = w2.apply_backward(&t.act, grad)?;
    let g_hidden = activate_backward(Activation::Relu, &t.hidden, &t.act, &g_act)?;
    let (g_in, g_w1) = w1.apply_backward(&t.input, &g_hidden)?;
    Ok((g_in, g_w1, g_w2))
}

#[derive(Debug, Clone)]
struct CamTrace {
    avg: MlpTrace,
    max: MlpTrace,
    logits: ChannelVector,
    weight: ChannelVector,
}

fn cam_forward(f: &Tensor, p: &CiemParams) -> Result<CamTrace> {
    let avg = mlp_forward(global_avg_pool(f), p.cam_w1(), p.cam_w2())?;
    let max = mlp_forward(global_max_pool(f), p.cam_w1(), p.cam_w2())?;
    let logits = ChannelVector::new(avg.out.data().iter().zip(max.out.data()).map(|(a, b)| a + b).collect())?;
    let weight = activate(Activation::Sigmoid, &logits);
    Ok(CamTrace { avg, max, logits, weight })
}

/// Channel attention over `f`: a shared two-layer MLP applied to the
/// spatial mean and spatial max descriptors, summed, then squashed by a
/// sigmoid. Every weight is strictly inside (0, 1).
pub fn channel_attention(f: &Tensor, p: &CiemParams) -> Result<ChannelVector> {
    check_channels("channel_attention", f, p)?;
    Ok(cam_forward(f, p)?.weight)
}

#[derive(Debug, Clone)]
struct PamTrace {
    descriptor: Tensor,
    logits: Tensor,
    weight: SpatialMap,
}

fn pam_forward(f: &Tensor, p: &CiemParams) -> Result<PamTrace> {
    let avg = channel_pool(f, PoolKind::Avg).to_tensor();
    let max = channel_pool(f, PoolKind::Max).to_tensor();
    let descriptor = concat_channels(&avg, &max)?;
    let logits = conv2d(&descriptor, p.pam_conv(), same_padding(p.pam_conv()))?;
    let weight = activate(Activation::Sigmoid, &logits).to_spatial_map()?;
    Ok(PamTrace { descriptor, logits, weight })
}

/// Spatial attention over `f`: a 7x7 convolution of the stacked per-position
/// channel mean and channel max, squashed by a sigmoid.
pub fn spatial_attention(f: &Tensor, p: &CiemParams) -> Result<SpatialMap> {
    check_channels("spatial_attention", f, p)?;
    Ok(pam_forward(f, p)?.weight)
}

/// Every intermediate of [`ciem_enhance`], retained for the backward pass.
#[derive(Debug, Clone)]
pub struct CiemTrace {
    f_c: Tensor,
    f_t: Tensor,
    fuse: FuseTrace,
    cam: CamTrace,
    /// Fused map scaled by the channel attention; input to the spatial branch.
    attended: Tensor,
    pam: PamTrace,
    scaled_c: Tensor,
    scaled_t: Tensor,
    enhanced_c: Tensor,
    enhanced_t: Tensor,
}

impl CiemTrace {
    pub fn fused(&self) -> &Tensor {
        &self.fuse.fused
    }

    pub fn channel_weights(&self) -> &ChannelVector {
        &self.cam.weight
    }

    pub fn spatial_weights(&self) -> &SpatialMap {
        &self.pam.weight
    }

    pub fn enhanced_color(&self) -> &Tensor {
        &self.enhanced_c
    }

    pub fn enhanced_thermal(&self) -> &Tensor {
        &self.enhanced_t
    }

    /// Active ReLU units and selected max-pool indices; two points with the
    /// same signature lie on the same smooth piece of the function.
    pub(crate) fn signature(&self) -> Vec<usize> {
        let mut sig = Vec::new();
        let mut push_mask = |v: &[f64]| sig.extend(v.iter().map(|&x| usize::from(x > 0.0)));
        push_mask(self.fuse.normed.data());
        push_mask(self.cam.avg.hidden.data());
        push_mask(self.cam.max.hidden.data());
        sig.extend(spatial_argmax(&self.fuse.fused));
        sig.extend(channel_argmax(&self.attended));
        sig
    }
}

pub fn ciem_forward(f_c: &Tensor, f_t: &Tensor, p: &CiemParams) -> Result<CiemTrace> {
    check_pair("ciem_enhance", f_c, f_t, p)?;
    let fuse = fuse_forward(f_c, f_t, p)?;
    let cam = cam_forward(&fuse.fused, p)?;
    let attended = broadcast_combine(&fuse.fused, &cam.weight, Combine::Mul)?;
    let pam = pam_forward(&attended, p)?;
    let scaled_c = broadcast_combine(f_c, &cam.weight, Combine::Mul)?;
    let scaled_t = broadcast_combine(f_t, &cam.weight, Combine::Mul)?;
    let enhanced_c = broadcast_combine(&scaled_c, &pam.weight, Combine::Mul)?;
    let enhanced_t = broadcast_combine(&scaled_t, &pam.weight, Combine::Mul)?;
    Ok(CiemTrace {
        f_c: f_c.clone(),
        f_t: f_t.clone(),
        fuse,
        cam,
        attended,
        pam,
        scaled_c,
        scaled_t,
        enhanced_c,
        enhanced_t,
    })
}

/// Re-weights both modalities with attention derived from their fusion:
/// returns `(f_c ⊗ w_ca ⊗ w_pa, f_t ⊗ w_ca ⊗ w_pa)` where `w_ca` is the
/// channel attention of the fused map and `w_pa` the spatial attention of
/// the fused map after channel weighting.
pub fn ciem_enhance(f_c: &Tensor, f_t: &Tensor, p: &CiemParams) -> Result<(Tensor, Tensor)> {
    let t = ciem_forward(f_c, f_t, p)?;
    Ok((t.enhanced_c, t.enhanced_t))
}

/// Gradients of the enhancement block.
#[derive(Debug, Clone)]
pub struct CiemGrads {
    pub f_c: Tensor,
    pub f_t: Tensor,
    pub conv1: ConvKernel,
    pub conv3: ConvKernel,
    pub bn: BatchNormGrad,
    pub cam_w1: Matrix,
    pub cam_w2: Matrix,
    pub pam_conv: ConvKernel,
}

fn add_into(acc: &mut Tensor, other: &Tensor) {
    for (a, b) in acc.data_mut().iter_mut().zip(other.data()) {
        *a += b;
    }
}

fn add_vectors(a: &ChannelVector, b: &ChannelVector) -> Result<ChannelVector> {
    ChannelVector::new(a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect())
}

/// Backpropagates upstream gradients for the two enhanced outputs.
pub fn ciem_backward(t: &CiemTrace, p: &CiemParams, grad_c: &Tensor, grad_t: &Tensor) -> Result<CiemGrads> {
    // enhanced = (f ⊗ w_ca) ⊗ w_pa for each modality
    let (g_scaled_c, g_wpa_c) = broadcast_combine_backward(&t.scaled_c, &t.pam.weight, Combine::Mul, grad_c)?;
    let (g_scaled_t, g_wpa_t) = broadcast_combine_backward(&t.scaled_t, &t.pam.weight, Combine::Mul, grad_t)?;
    let (mut g_f_c, g_wca_c) = broadcast_combine_backward(&t.f_c, &t.cam.weight, Combine::Mul, &g_scaled_c)?;
    let (mut g_f_t, g_wca_t) = broadcast_combine_backward(&t.f_t, &t.cam.weight, Combine::Mul, &g_scaled_t)?;
    let g_wpa_c = g_wpa_c.into_spatial().expect("spatial operand");
    let g_wpa_t = g_wpa_t.into_spatial().expect("spatial operand");
    let g_wpa = SpatialMap::new(
        g_wpa_c.width(),
        g_wpa_c.height(),
        g_wpa_c.data().iter().zip(g_wpa_t.data()).map(|(a, b)| a + b).collect(),
    )?;

    // spatial branch
    let pam_out = activate(Activation::Sigmoid, &t.pam.logits);
    let g_logits = activate_backward(Activation::Sigmoid, &t.pam.logits, &pam_out, &g_wpa.to_tensor())?;
    let (g_desc, pam_conv) = conv2d_backward(&t.pam.descriptor, p.pam_conv(), same_padding(p.pam_conv()), &g_logits)?;
    let (g_avg_map, g_max_map) = split_channels(&g_desc, 1)?;
    let mut g_attended = channel_pool_backward(&t.attended, PoolKind::Avg, &g_avg_map.to_spatial_map()?)?;
    add_into(&mut g_attended, &channel_pool_backward(&t.attended, PoolKind::Max, &g_max_map.to_spatial_map()?)?);

    // attended = fused ⊗ w_ca
    let (mut g_fused, g_wca_att) = broadcast_combine_backward(&t.fuse.fused, &t.cam.weight, Combine::Mul, &g_attended)?;
    let g_wca = add_vectors(
        &add_vectors(
            &g_wca_c.into_channel().expect("channel operand"),
            &g_wca_t.into_channel().expect("channel operand"),
        )?,
        &g_wca_att.into_channel().expect("channel operand"),
    )?;

    // channel branch
    let g_cam_logits = activate_backward(Activation::Sigmoid, &t.cam.logits, &t.cam.weight, &g_wca)?;
    let (g_avg, g_w1_a, g_w2_a) = mlp_backward(&t.cam.avg, p.cam_w1(), p.cam_w2(), &g_cam_logits)?;
    let (g_max, g_w1_m, g_w2_m) = mlp_backward(&t.cam.max, p.cam_w1(), p.cam_w2(), &g_cam_logits)?;
    add_into(&mut g_fused, &global_avg_pool_backward(&t.fuse.fused, &g_avg)?);
    add_into(&mut g_fused, &global_max_pool_backward(&t.fuse.fused, &g_max)?);
    let sum_matrix = |a: Matrix, b: Matrix| {
        Matrix::new(a.rows(), a.cols(), a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect())
    };
    let cam_w1 = sum_matrix(g_w1_a, g_w1_m)?;
    let cam_w2 = sum_matrix(g_w2_a, g_w2_m)?;

    // fusion block
    let g_normed = activate_backward(Activation::Relu, &t.fuse.normed, &t.fuse.fused, &g_fused)?;
    let bn = batchnorm_infer_backward(&t.fuse.spread, p.bn(), &g_normed)?;
    let (g_reduced, conv3) = conv2d_backward(&t.fuse.reduced, p.conv3(), same_padding(p.conv3()), &bn.input)?;
    let (g_cat, conv1) = conv2d_backward(&t.fuse.cat, p.conv1(), 0, &g_reduced)?;
    let (g_cat_c, g_cat_t) = split_channels(&g_cat, p.channels())?;
    add_into(&mut g_f_c, &g_cat_c);
    add_into(&mut g_f_t, &g_cat_t);

    Ok(CiemGrads { f_c: g_f_c, f_t: g_f_t, conv1, conv3, bn, cam_w1, cam_w2, pam_conv })
}
