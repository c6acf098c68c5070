//! Two-stage detector training objective: classification cross-entropy plus
//! Smooth-L1 box regression gated on positive anchors, for both the region
//! proposal stage and the Fast R-CNN stage.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Probabilities are clamped to `[LOG_CLAMP, 1 - LOG_CLAMP]` before any log.
pub const LOG_CLAMP: f64 = 1e-12;

/// Smooth-L1 transition parameter used for the proposal stage.
pub const RPN_SIGMA: f64 = 3.0;
/// Smooth-L1 transition parameter used for the Fast R-CNN stage.
pub const FAST_RCNN_SIGMA: f64 = 1.0;

/// Continuous Smooth-L1: `0.5 σ² x²` for `|x| < 1/σ²`, else `|x| - 0.5/σ²`.
pub fn smooth_l1(x: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter { name: "sigma", reason: format!("{sigma} is not positive") });
    }
    let s2 = sigma * sigma;
    let ax = x.abs();
    Ok(if ax < 1.0 / s2 { 0.5 * s2 * x * x } else { ax - 0.5 / s2 })
}

/// `-ln(p* p + (1 - p*)(1 - p))` with `p` clamped away from 0 and 1.
pub fn binary_cross_entropy(p: f64, positive: bool) -> f64 {
    let p = p.clamp(LOG_CLAMP, 1.0 - LOG_CLAMP);
    -libm::log(if positive { p } else { 1.0 - p })
}

/// `-ln(p[class])`, clamped like [`binary_cross_entropy`].
pub fn multiclass_cross_entropy(p: &[f64], class_index: usize) -> Result<f64> {
    let q = p.get(class_index).ok_or_else(|| Error::InvalidParameter {
        name: "class_index",
        reason: format!("{class_index} out of range for {} classes", p.len()),
    })?;
    Ok(-libm::log(q.clamp(LOG_CLAMP, 1.0 - LOG_CLAMP)))
}

/// Predicted class scores of one anchor or proposal.
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    /// Objectness probability in `[0, 1]`.
    Binary(f64),
    /// Class distribution summing to 1.
    Multiclass(Vec<f64>),
}

/// One training example for [`detection_loss`].
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSample {
    p: Prediction,
    /// 0/1 for binary predictions, the class index for multi-class ones.
    label: usize,
    t: [f64; 4],
    t_star: [f64; 4],
    is_positive: bool,
}

impl AnchorSample {
    /// A proposal-stage sample. The label is 1 for positives, 0 otherwise.
    pub fn binary(p: f64, is_positive: bool, t: [f64; 4], t_star: [f64; 4]) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter { name: "p", reason: format!("{p} outside [0, 1]") });
        }
        Self::check_regression(&t, &t_star)?;
        Ok(Self { p: Prediction::Binary(p), label: usize::from(is_positive), t, t_star, is_positive })
    }

    /// A second-stage sample over `p.len()` classes; class 0 is background.
    pub fn multiclass(p: Vec<f64>, class_index: usize, t: [f64; 4], t_star: [f64; 4]) -> Result<Self> {
        let sum: f64 = p.iter().sum();
        if p.iter().any(|&v| !(0.0..=1.0).contains(&v)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter { name: "p", reason: format!("not a probability vector (sum {sum})") });
        }
        if class_index >= p.len() {
            return Err(Error::InvalidParameter {
                name: "class_index",
                reason: format!("{class_index} out of range for {} classes", p.len()),
            });
        }
        Self::check_regression(&t, &t_star)?;
        Ok(Self { p: Prediction::Multiclass(p), label: class_index, t, t_star, is_positive: class_index != 0 })
    }

    fn check_regression(t: &[f64; 4], t_star: &[f64; 4]) -> Result<()> {
        if t.iter().chain(t_star).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter { name: "t", reason: "non-finite regression target".into() });
        }
        Ok(())
    }

    pub fn prediction(&self) -> &Prediction {
        &self.p
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn is_positive(&self) -> bool {
        self.is_positive
    }

    /// Classification term for this sample.
    pub fn classification_loss(&self) -> f64 {
        match &self.p {
            Prediction::Binary(p) => binary_cross_entropy(*p, self.label == 1),
            Prediction::Multiclass(p) => -libm::log(p[self.label].clamp(LOG_CLAMP, 1.0 - LOG_CLAMP)),
        }
    }

    /// Smooth-L1 summed over the four components of `t - t*`.
    pub fn regression_loss(&self, sigma: f64) -> Result<f64> {
        self.t.iter().zip(&self.t_star).map(|(a, b)| smooth_l1(a - b, sigma)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageKind {
    /// Region proposal network, binary objectness.
    Rpn,
    /// Second stage, multi-class.
    FastRcnn,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub sigma: f64,
    pub lambda: f64,
    pub n_cls: f64,
    pub n_reg: f64,
}

impl LossConfig {
    pub fn new(sigma: f64, lambda: f64, n_cls: f64, n_reg: f64) -> Result<Self> {
        for (name, v) in [("sigma", sigma), ("lambda", lambda), ("n_cls", n_cls), ("n_reg", n_reg)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "loss_config",
                    reason: format!("{name} = {v} must be positive"),
                });
            }
        }
        Ok(Self { sigma, lambda, n_cls, n_reg })
    }

    /// σ = 3, λ = 1 with the given normalizers.
    pub fn rpn(n_cls: f64, n_reg: f64) -> Result<Self> {
        Self::new(RPN_SIGMA, 1.0, n_cls, n_reg)
    }

    /// σ = 1, λ = 1 with the given normalizers.
    pub fn fast_rcnn(n_cls: f64, n_reg: f64) -> Result<Self> {
        Self::new(FAST_RCNN_SIGMA, 1.0, n_cls, n_reg)
    }
}

/// `total = cls + reg`, already normalized and weighted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub cls: f64,
    pub reg: f64,
}

/// `(1/N_cls) Σ L_cls + λ (1/N_reg) Σ p* L_reg`.
///
/// Every sample must match `kind` (binary for the proposal stage,
/// multi-class for the second stage). An empty list yields zeros.
pub fn detection_loss(samples: &[AnchorSample], cfg: &LossConfig, kind: StageKind) -> Result<LossBreakdown> {
    let mut cls_sum = 0.0;
    let mut reg_sum = 0.0;
    for (i, s) in samples.iter().enumerate() {
        let matches = matches!(
            (kind, &s.p),
            (StageKind::Rpn, Prediction::Binary(_)) | (StageKind::FastRcnn, Prediction::Multiclass(_))
        );
        if !matches {
            return Err(Error::InvalidParameter {
                name: "samples",
                reason: format!("sample {i} does not match the {kind:?} stage"),
            });
        }
        cls_sum += s.classification_loss();
        if s.is_positive {
            reg_sum += s.regression_loss(cfg.sigma)?;
        }
    }
    let cls = cls_sum / cfg.n_cls;
    let reg = cfg.lambda * reg_sum / cfg.n_reg;
    Ok(LossBreakdown { total: cls + reg, cls, reg })
}

/// Sum of the proposal-stage and second-stage totals.
pub fn joint_loss(rpn_total: f64, fast_rcnn_total: f64) -> Result<f64> {
    if !(rpn_total >= 0.0 && fast_rcnn_total >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "joint_loss",
            reason: format!("stage losses {rpn_total}, {fast_rcnn_total} must be non-negative"),
        });
    }
    Ok(rpn_total + fast_rcnn_total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_abs_diff_eq;

    const Z: [f64; 4] = [0.0; 4];

    #[test]
    fn smooth_l1_reference_values() {
        assert_eq!(smooth_l1(0.0, 1.0).unwrap(), 0.0);
        assert_eq!(smooth_l1(2.0, 1.0).unwrap(), 1.5);
        assert_eq!(smooth_l1(-2.0, 1.0).unwrap(), 1.5);
        assert_abs_diff_eq!(smooth_l1(1.0 / 9.0, 3.0).unwrap(), 1.0 / 18.0, epsilon = 1e-15);
        assert!(smooth_l1(1.0, 0.0).is_err());
        assert!(smooth_l1(1.0, -1.0).is_err());
    }

    #[test]
    fn cross_entropy_closed_forms() {
        assert_eq!(binary_cross_entropy(1.0, true), -libm::log(1.0 - LOG_CLAMP));
        assert!(binary_cross_entropy(1.0, true) < 1e-11);
        assert_abs_diff_eq!(binary_cross_entropy(0.5, true), core::f64::consts::LN_2, epsilon = 1e-12);
        assert_abs_diff_eq!(binary_cross_entropy(0.5, false), core::f64::consts::LN_2, epsilon = 1e-12);
        assert_abs_diff_eq!(binary_cross_entropy(0.9, false), core::f64::consts::LN_10, epsilon = 1e-12);
        assert!(binary_cross_entropy(0.0, true).is_finite());
        assert_abs_diff_eq!(multiclass_cross_entropy(&[0.25; 4], 2).unwrap(), libm::log(4.0), epsilon = 1e-12);
        let e1 = libm::exp(-1.0);
        assert_abs_diff_eq!(multiclass_cross_entropy(&[e1, 1.0 - e1], 0).unwrap(), 1.0, epsilon = 1e-12);
        assert!(multiclass_cross_entropy(&[0.0, 1.0, 0.0], 1).unwrap() < 1e-11);
        assert!(multiclass_cross_entropy(&[0.5, 0.5], 2).is_err());
    }

    #[test]
    fn single_positive_regression_fixture() {
        let s = AnchorSample::binary(1.0, true, [2.0, 0.0, 0.0, 0.0], Z).unwrap();
        let cfg = LossConfig::new(1.0, 1.0, 1.0, 1.0).unwrap();
        let out = detection_loss(&[s], &cfg, StageKind::Rpn).unwrap();
        assert_abs_diff_eq!(out.total, 1.5, epsilon = 1e-11);
        assert_abs_diff_eq!(out.reg, 1.5, epsilon = 0.0);
    }

    #[test]
    fn negatives_never_regress() {
        let s = AnchorSample::binary(0.2, false, [5.0, -3.0, 1.0, 9.0], Z).unwrap();
        let cfg = LossConfig::rpn(1.0, 1.0).unwrap();
        assert_eq!(detection_loss(&[s], &cfg, StageKind::Rpn).unwrap().reg, 0.0);
        let bg = AnchorSample::multiclass(vec![0.7, 0.3], 0, [5.0; 4], Z).unwrap();
        let cfg = LossConfig::fast_rcnn(1.0, 1.0).unwrap();
        assert_eq!(detection_loss(&[bg], &cfg, StageKind::FastRcnn).unwrap().reg, 0.0);
    }

    #[test]
    fn empty_and_perfect_lists() {
        let cfg = LossConfig::rpn(4.0, 4.0).unwrap();
        assert_eq!(
            detection_loss(&[], &cfg, StageKind::Rpn).unwrap(),
            LossBreakdown { total: 0.0, cls: 0.0, reg: 0.0 }
        );
        let perfect = [
            AnchorSample::binary(1.0, true, [0.1; 4], [0.1; 4]).unwrap(),
            AnchorSample::binary(0.0, false, [3.0; 4], Z).unwrap(),
        ];
        assert!(detection_loss(&perfect, &cfg, StageKind::Rpn).unwrap().total < 1e-11);
    }

    #[test]
    fn stage_kind_must_match_samples() {
        let s = AnchorSample::binary(0.5, true, Z, Z).unwrap();
        let cfg = LossConfig::fast_rcnn(1.0, 1.0).unwrap();
        assert!(detection_loss(&[s], &cfg, StageKind::FastRcnn).is_err());
    }

    #[test]
    fn invalid_samples_and_configs() {
        assert!(AnchorSample::binary(1.2, true, Z, Z).is_err());
        assert!(AnchorSample::multiclass(vec![0.5, 0.6], 0, Z, Z).is_err());
        assert!(AnchorSample::multiclass(vec![0.5, 0.5], 2, Z, Z).is_err());
        assert!(AnchorSample::binary(0.5, true, [f64::NAN, 0.0, 0.0, 0.0], Z).is_err());
        assert!(LossConfig::new(1.0, 0.0, 1.0, 1.0).is_err());
        assert!(LossConfig::new(1.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn joint_is_sum() {
        assert_eq!(joint_loss(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(joint_loss(1.5, 2.5).unwrap(), 4.0);
        assert!(joint_loss(-1.0, 0.0).is_err());
    }
}
