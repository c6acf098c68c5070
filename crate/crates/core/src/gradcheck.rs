//! Central finite-difference verification of [`fusion_backward`].
//!
//! The scalar probed is `L = <grad_out, fusion_forward(f_c, f_t, p)>`, whose
//! gradient is exactly what `fusion_backward(.., grad_out)` returns. Each
//! coordinate is perturbed by `±step` and compared with
//! `(L(+step) - L(-step)) / (2 step)`.
//!
//! The pipeline is only piecewise smooth (ReLU and max pooling). A probe
//! whose `±step` points fall on a different smooth piece than the base point
//! has no meaningful central difference; such probes are counted as
//! `straddled` and excluded from the error statistics.

use alloc::vec::Vec;

use crate::error::{shape_mismatch, Result};
use crate::fusion::{fusion_backward, fusion_trace, FusionGrads, FusionParams, ParamGroup};
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-4;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;

/// Gradient magnitudes below this are compared absolutely rather than
/// relatively, so truncation noise on near-zero entries is not amplified.
pub const RELATIVE_FLOOR: f64 = 1e-3;

/// `|a - n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Target {
    Color,
    Thermal,
    Param(ParamGroup),
}

impl Target {
    pub fn all() -> impl Iterator<Item = Target> {
        [Target::Color, Target::Thermal].into_iter().chain(ParamGroup::ALL.into_iter().map(Target::Param))
    }

    pub fn name(self) -> &'static str {
        match self {
            Target::Color => "input.color",
            Target::Thermal => "input.thermal",
            Target::Param(g) => g.name(),
        }
    }

    /// The analytic gradient slice for this target.
    pub fn of(self, grads: &FusionGrads) -> &[f64] {
        match self {
            Target::Color => grads.f_c.data(),
            Target::Thermal => grads.f_t.data(),
            Target::Param(g) => grads.params.get(g),
        }
    }

    pub fn of_mut(self, grads: &mut FusionGrads) -> &mut [f64] {
        match self {
            Target::Color => grads.f_c.data_mut(),
            Target::Thermal => grads.f_t.data_mut(),
            Target::Param(g) => grads.params.get_mut(g),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    pub target: Target,
    pub probes: usize,
    pub straddled: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub step: f64,
    pub tolerance: f64,
    pub groups: Vec<GroupReport>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.max_rel_error < self.tolerance)
    }

    pub fn worst(&self) -> Option<&GroupReport> {
        self.groups.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }

    pub fn max_rel_error(&self) -> f64 {
        self.worst().map_or(0.0, |g| g.max_rel_error)
    }
}

struct Probe<'a> {
    f_c: Tensor,
    f_t: Tensor,
    params: FusionParams,
    grad_out: &'a Tensor,
}

impl Probe<'_> {
    fn slot(&mut self, target: Target) -> &mut [f64] {
        match target {
            Target::Color => self.f_c.data_mut(),
            Target::Thermal => self.f_t.data_mut(),
            Target::Param(g) => self.params.group_mut(g),
        }
    }

    fn eval(&self) -> Result<(f64, Vec<usize>)> {
        let trace = fusion_trace(&self.f_c, &self.f_t, &self.params)?;
        let loss = trace.output().data().iter().zip(self.grad_out.data()).map(|(a, b)| a * b).sum();
        Ok((loss, trace.signature()))
    }
}

/// Compares `analytic` against central differences for every coordinate of
/// both inputs and every parameter group.
pub fn check_fusion_gradients(
    f_c: &Tensor,
    f_t: &Tensor,
    params: &FusionParams,
    grad_out: &Tensor,
    analytic: &FusionGrads,
    step: f64,
    tolerance: f64,
) -> Result<GradcheckReport> {
    let mut probe = Probe { f_c: f_c.clone(), f_t: f_t.clone(), params: params.clone(), grad_out };
    let (_, base_sig) = probe.eval()?;
    let mut groups = Vec::new();
    for target in Target::all() {
        let expected = target.of(analytic);
        let n = probe.slot(target).len();
        if expected.len() != n {
            return Err(shape_mismatch("check_fusion_gradients", format_args!("{n} gradient entries"), expected.len()));
        }
        let mut report = GroupReport { target, probes: n, straddled: 0, max_rel_error: 0.0, worst_index: 0 };
        for (i, &want) in expected.iter().enumerate() {
            let original = probe.slot(target)[i];
            probe.slot(target)[i] = original + step;
            let (plus, sig_plus) = probe.eval()?;
            probe.slot(target)[i] = original - step;
            let (minus, sig_minus) = probe.eval()?;
            probe.slot(target)[i] = original;
            if sig_plus != base_sig || sig_minus != base_sig {
                report.straddled += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * step);
            let err = relative_error(want, numeric);
            if err > report.max_rel_error || err.is_nan() {
                report.max_rel_error = if err.is_nan() { f64::INFINITY } else { err };
                report.worst_index = i;
            }
        }
        groups.push(report);
    }
    Ok(GradcheckReport { step, tolerance, groups })
}

/// Runs [`fusion_backward`] and checks it against central differences.
pub fn gradcheck_fusion(
    f_c: &Tensor,
    f_t: &Tensor,
    params: &FusionParams,
    grad_out: &Tensor,
) -> Result<GradcheckReport> {
    let analytic = fusion_backward(f_c, f_t, params, grad_out)?;
    check_fusion_gradients(f_c, f_t, params, grad_out, &analytic, DEFAULT_STEP, DEFAULT_TOLERANCE)
}
