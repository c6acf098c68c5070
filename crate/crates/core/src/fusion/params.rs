use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::init::{random_kernel, random_matrix, uniform};
use crate::tensor::{BatchNormParams, ConvKernel, Matrix};

/// Learnable weights of the cascaded information enhancement block.
#[derive(Debug, Clone, PartialEq)]
pub struct CiemParams {
    conv1: ConvKernel,
    conv3: ConvKernel,
    bn: BatchNormParams,
    cam_w1: Matrix,
    cam_w2: Matrix,
    pam_conv: ConvKernel,
}

fn invalid(name: &'static str, reason: alloc::string::String) -> Error {
    Error::InvalidParameter { name, reason }
}

fn expect_kernel(name: &'static str, k: &ConvKernel, dims: [usize; 4]) -> Result<()> {
    if k.dims() != dims {
        return Err(invalid(name, format!("expected kernel {:?}, found {:?}", dims, k.dims())));
    }
    Ok(())
}

impl CiemParams {
    /// Checks the channel chain `2C -> C -> C`, the `C -> C/r -> C`
    /// attention MLP and the `2 -> 1` 7x7 spatial kernel.
    pub fn new(
        conv1: ConvKernel,
        conv3: ConvKernel,
        bn: BatchNormParams,
        cam_w1: Matrix,
        cam_w2: Matrix,
        pam_conv: ConvKernel,
    ) -> Result<Self> {
        let c = conv3.out_channels();
        expect_kernel("ciem.conv1", &conv1, [1, 1, 2 * c, c])?;
        expect_kernel("ciem.conv3", &conv3, [3, 3, c, c])?;
        expect_kernel("ciem.pam", &pam_conv, [7, 7, 2, 1])?;
        if bn.channels() != c {
            return Err(invalid("ciem.bn", format!("{} channels, expected {c}", bn.channels())));
        }
        let hidden = cam_w1.cols();
        if cam_w1.rows() != c || cam_w2.rows() != hidden || cam_w2.cols() != c {
            return Err(invalid(
                "ciem.cam",
                format!(
                    "MLP {}x{} then {}x{} does not chain {c} -> hidden -> {c}",
                    cam_w1.rows(),
                    cam_w1.cols(),
                    cam_w2.rows(),
                    cam_w2.cols()
                ),
            ));
        }
        if !c.is_multiple_of(hidden) {
            return Err(invalid("ciem.cam", format!("hidden width {hidden} does not divide {c}")));
        }
        Ok(Self { conv1, conv3, bn, cam_w1, cam_w2, pam_conv })
    }

    /// Seeded initialization; BN statistics are drawn near the identity.
    pub fn random(rng: &mut impl Rng, channels: usize, reduction: usize) -> Result<Self> {
        if channels == 0 || reduction == 0 || !channels.is_multiple_of(reduction) {
            return Err(invalid(
                "ciem.reduction",
                format!("reduction ratio {reduction} must divide {channels} channels"),
            ));
        }
        let c = channels;
        let hidden = c / reduction;
        let conv1 = random_kernel(rng, 1, 2 * c, c);
        let conv3 = random_kernel(rng, 3, c, c);
        let gamma = uniform(rng, c, 0.25).into_iter().map(|v| 1.0 + v).collect();
        let beta = uniform(rng, c, 0.1);
        let mean = uniform(rng, c, 0.1);
        let var = uniform(rng, c, 0.4).into_iter().map(|v| 1.0 + v).collect();
        let bn = BatchNormParams::new(gamma, beta, mean, var, 1e-5)?;
        let cam_w1 = random_matrix(rng, c, hidden);
        let cam_w2 = random_matrix(rng, hidden, c);
        let pam_conv = random_kernel(rng, 7, 2, 1);
        Self::new(conv1, conv3, bn, cam_w1, cam_w2, pam_conv)
    }

    pub fn channels(&self) -> usize {
        self.conv3.out_channels()
    }

    pub fn reduction(&self) -> usize {
        self.channels() / self.cam_w1.cols()
    }

    pub fn conv1(&self) -> &ConvKernel {
        &self.conv1
    }

    pub fn conv3(&self) -> &ConvKernel {
        &self.conv3
    }

    pub fn bn(&self) -> &BatchNormParams {
        &self.bn
    }

    pub fn cam_w1(&self) -> &Matrix {
        &self.cam_w1
    }

    pub fn cam_w2(&self) -> &Matrix {
        &self.cam_w2
    }

    pub fn pam_conv(&self) -> &ConvKernel {
        &self.pam_conv
    }
}

/// The three 1x1 convolutions of the cross-modal fusion block, acting on
/// `1x1xC` descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct CaffmParams {
    conv_t: ConvKernel,
    conv_c: ConvKernel,
    conv_g: ConvKernel,
}

impl CaffmParams {
    pub fn new(conv_t: ConvKernel, conv_c: ConvKernel, conv_g: ConvKernel) -> Result<Self> {
        let c = conv_t.out_channels();
        expect_kernel("caffm.conv_t", &conv_t, [1, 1, c, c])?;
        expect_kernel("caffm.conv_c", &conv_c, [1, 1, c, c])?;
        expect_kernel("caffm.conv_g", &conv_g, [1, 1, c, c])?;
        Ok(Self { conv_t, conv_c, conv_g })
    }

    pub fn random(rng: &mut impl Rng, channels: usize) -> Result<Self> {
        Self::new(
            random_kernel(rng, 1, channels, channels),
            random_kernel(rng, 1, channels, channels),
            random_kernel(rng, 1, channels, channels),
        )
    }

    pub fn channels(&self) -> usize {
        self.conv_t.out_channels()
    }

    /// Maps the thermal descriptor to the thermal attention weights.
    pub fn conv_t(&self) -> &ConvKernel {
        &self.conv_t
    }

    /// Maps the color descriptor to the color attention weights.
    pub fn conv_c(&self) -> &ConvKernel {
        &self.conv_c
    }

    /// Maps the summed complemented descriptors to the global gate.
    pub fn conv_g(&self) -> &ConvKernel {
        &self.conv_g
    }

    /// The same block with the color and thermal kernels exchanged.
    pub fn swapped(&self) -> Self {
        Self { conv_t: self.conv_c.clone(), conv_c: self.conv_t.clone(), conv_g: self.conv_g.clone() }
    }
}

/// Everything learnable in the enhancement + cross-modal fusion pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    ciem: CiemParams,
    caffm: CaffmParams,
}

/// Largest of 4, 2, 1 that divides `channels`.
pub fn default_reduction(channels: usize) -> usize {
    [4, 2, 1].into_iter().find(|&r| channels.is_multiple_of(r)).unwrap_or(1)
}

impl FusionParams {
    pub fn new(ciem: CiemParams, caffm: CaffmParams) -> Result<Self> {
        if ciem.channels() != caffm.channels() {
            return Err(invalid(
                "fusion",
                format!("enhancement has {} channels, cross-modal block {}", ciem.channels(), caffm.channels()),
            ));
        }
        Ok(Self { ciem, caffm })
    }

    pub fn random(rng: &mut impl Rng, channels: usize, reduction: usize) -> Result<Self> {
        let ciem = CiemParams::random(rng, channels, reduction)?;
        let caffm = CaffmParams::random(rng, channels)?;
        Self::new(ciem, caffm)
    }

    pub fn ciem(&self) -> &CiemParams {
        &self.ciem
    }

    pub fn caffm(&self) -> &CaffmParams {
        &self.caffm
    }

    pub fn channels(&self) -> usize {
        self.ciem.channels()
    }

    pub fn group(&self, g: ParamGroup) -> &[f64] {
        let (ci, ca) = (&self.ciem, &self.caffm);
        match g {
            ParamGroup::Conv1Weight => ci.conv1.weights(),
            ParamGroup::Conv1Bias => ci.conv1.bias(),
            ParamGroup::Conv3Weight => ci.conv3.weights(),
            ParamGroup::Conv3Bias => ci.conv3.bias(),
            ParamGroup::BnGamma => ci.bn.gamma(),
            ParamGroup::BnBeta => ci.bn.beta(),
            ParamGroup::BnMean => ci.bn.running_mean(),
            ParamGroup::BnVar => ci.bn.running_var(),
            ParamGroup::CamW1 => ci.cam_w1.data(),
            ParamGroup::CamW2 => ci.cam_w2.data(),
            ParamGroup::PamWeight => ci.pam_conv.weights(),
            ParamGroup::PamBias => ci.pam_conv.bias(),
            ParamGroup::ConvTWeight => ca.conv_t.weights(),
            ParamGroup::ConvTBias => ca.conv_t.bias(),
            ParamGroup::ConvCWeight => ca.conv_c.weights(),
            ParamGroup::ConvCBias => ca.conv_c.bias(),
            ParamGroup::ConvGWeight => ca.conv_g.weights(),
            ParamGroup::ConvGBias => ca.conv_g.bias(),
        }
    }

    /// Mutable access for perturbation. Keep `running_var + epsilon > 0`.
    pub fn group_mut(&mut self, g: ParamGroup) -> &mut [f64] {
        let (ci, ca) = (&mut self.ciem, &mut self.caffm);
        match g {
            ParamGroup::Conv1Weight => ci.conv1.weights_mut(),
            ParamGroup::Conv1Bias => ci.conv1.bias_mut(),
            ParamGroup::Conv3Weight => ci.conv3.weights_mut(),
            ParamGroup::Conv3Bias => ci.conv3.bias_mut(),
            ParamGroup::BnGamma => ci.bn.gamma_mut(),
            ParamGroup::BnBeta => ci.bn.beta_mut(),
            ParamGroup::BnMean => ci.bn.running_mean_mut(),
            ParamGroup::BnVar => ci.bn.running_var_mut(),
            ParamGroup::CamW1 => ci.cam_w1.data_mut(),
            ParamGroup::CamW2 => ci.cam_w2.data_mut(),
            ParamGroup::PamWeight => ci.pam_conv.weights_mut(),
            ParamGroup::PamBias => ci.pam_conv.bias_mut(),
            ParamGroup::ConvTWeight => ca.conv_t.weights_mut(),
            ParamGroup::ConvTBias => ca.conv_t.bias_mut(),
            ParamGroup::ConvCWeight => ca.conv_c.weights_mut(),
            ParamGroup::ConvCBias => ca.conv_c.bias_mut(),
            ParamGroup::ConvGWeight => ca.conv_g.weights_mut(),
            ParamGroup::ConvGBias => ca.conv_g.bias_mut(),
        }
    }

    /// Declared shape of a group for this channel count and reduction.
    pub fn group_dims(&self, g: ParamGroup) -> Vec<usize> {
        g.dims(self.channels(), self.ciem.cam_w1.cols())
    }
}

/// Names every learnable array of [`FusionParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamGroup {
    Conv1Weight,
    Conv1Bias,
    Conv3Weight,
    Conv3Bias,
    BnGamma,
    BnBeta,
    BnMean,
    BnVar,
    CamW1,
    CamW2,
    PamWeight,
    PamBias,
    ConvTWeight,
    ConvTBias,
    ConvCWeight,
    ConvCBias,
    ConvGWeight,
    ConvGBias,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 18] = [
        ParamGroup::Conv1Weight,
        ParamGroup::Conv1Bias,
        ParamGroup::Conv3Weight,
        ParamGroup::Conv3Bias,
        ParamGroup::BnGamma,
        ParamGroup::BnBeta,
        ParamGroup::BnMean,
        ParamGroup::BnVar,
        ParamGroup::CamW1,
        ParamGroup::CamW2,
        ParamGroup::PamWeight,
        ParamGroup::PamBias,
        ParamGroup::ConvTWeight,
        ParamGroup::ConvTBias,
        ParamGroup::ConvCWeight,
        ParamGroup::ConvCBias,
        ParamGroup::ConvGWeight,
        ParamGroup::ConvGBias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Conv1Weight => "ciem.conv1.weight",
            ParamGroup::Conv1Bias => "ciem.conv1.bias",
            ParamGroup::Conv3Weight => "ciem.conv3.weight",
            ParamGroup::Conv3Bias => "ciem.conv3.bias",
            ParamGroup::BnGamma => "ciem.bn.gamma",
            ParamGroup::BnBeta => "ciem.bn.beta",
            ParamGroup::BnMean => "ciem.bn.running_mean",
            ParamGroup::BnVar => "ciem.bn.running_var",
            ParamGroup::CamW1 => "ciem.cam.w1",
            ParamGroup::CamW2 => "ciem.cam.w2",
            ParamGroup::PamWeight => "ciem.pam.weight",
            ParamGroup::PamBias => "ciem.pam.bias",
            ParamGroup::ConvTWeight => "caffm.conv_t.weight",
            ParamGroup::ConvTBias => "caffm.conv_t.bias",
            ParamGroup::ConvCWeight => "caffm.conv_c.weight",
            ParamGroup::ConvCBias => "caffm.conv_c.bias",
            ParamGroup::ConvGWeight => "caffm.conv_g.weight",
            ParamGroup::ConvGBias => "caffm.conv_g.bias",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.name() == name)
    }

    /// Shape for `channels` channels and an attention MLP of width `hidden`.
    pub fn dims(self, channels: usize, hidden: usize) -> Vec<usize> {
        let c = channels;
        match self {
            ParamGroup::Conv1Weight => vec![1, 1, 2 * c, c],
            ParamGroup::Conv3Weight => vec![3, 3, c, c],
            ParamGroup::CamW1 => vec![c, hidden],
            ParamGroup::CamW2 => vec![hidden, c],
            ParamGroup::PamWeight => vec![7, 7, 2, 1],
            ParamGroup::PamBias => vec![1],
            ParamGroup::ConvTWeight | ParamGroup::ConvCWeight | ParamGroup::ConvGWeight => vec![1, 1, c, c],
            ParamGroup::Conv1Bias
            | ParamGroup::Conv3Bias
            | ParamGroup::BnGamma
            | ParamGroup::BnBeta
            | ParamGroup::BnMean
            | ParamGroup::BnVar
            | ParamGroup::ConvTBias
            | ParamGroup::ConvCBias
            | ParamGroup::ConvGBias => vec![c],
        }
    }
}

impl core::fmt::Display for ParamGroup {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Gradients for every [`ParamGroup`], stored flat in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    groups: Vec<Vec<f64>>,
}

impl ParamGrads {
    pub fn zeros_like(params: &FusionParams) -> Self {
        Self { groups: ParamGroup::ALL.iter().map(|&g| vec![0.0; params.group(g).len()]).collect() }
    }

    pub fn get(&self, g: ParamGroup) -> &[f64] {
        &self.groups[g as usize]
    }

    pub fn get_mut(&mut self, g: ParamGroup) -> &mut [f64] {
        &mut self.groups[g as usize]
    }

    pub(crate) fn set(&mut self, g: ParamGroup, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.groups[g as usize].len());
        self.groups[g as usize] = values;
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamGroup, &[f64])> {
        ParamGroup::ALL.into_iter().zip(self.groups.iter().map(Vec::as_slice))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::rng;

    #[test]
    fn random_params_have_declared_shapes() {
        let p = FusionParams::random(&mut rng(1), 4, 4).unwrap();
        assert_eq!(p.ciem().reduction(), 4);
        for g in ParamGroup::ALL {
            let n: usize = p.group_dims(g).iter().product();
            assert_eq!(p.group(g).len(), n, "{g}");
            assert_eq!(ParamGroup::from_name(g.name()), Some(g));
        }
    }

    #[test]
    fn reduction_must_divide_channels() {
        assert!(FusionParams::random(&mut rng(0), 6, 4).is_err());
        assert_eq!(default_reduction(6), 2);
        assert_eq!(default_reduction(8), 4);
        assert_eq!(default_reduction(3), 1);
    }

    #[test]
    fn mismatched_channel_chain_is_rejected() {
        let mut r = rng(3);
        let ciem = CiemParams::random(&mut r, 4, 2).unwrap();
        let caffm = CaffmParams::random(&mut r, 3).unwrap();
        assert!(FusionParams::new(ciem.clone(), caffm).is_err());
        let bad_conv3 = random_kernel(&mut r, 3, 4, 2);
        assert!(CiemParams::new(
            ciem.conv1.clone(),
            bad_conv3,
            ciem.bn.clone(),
            ciem.cam_w1.clone(),
            ciem.cam_w2.clone(),
            ciem.pam_conv.clone()
        )
        .is_err());
    }

    #[test]
    fn seeded_initialization_is_reproducible() {
        let a = FusionParams::random(&mut rng(42), 4, 4).unwrap();
        let b = FusionParams::random(&mut rng(42), 4, 4).unwrap();
        let c = FusionParams::random(&mut rng(43), 4, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
