//! Self-verification suites run by `mspd selftest`: tensor-core oracles,
//! loss closed forms and the evaluation fixture.
//!
//! The evaluation fixture is bundled into the binary and may be replaced by
//! a directory holding `annotations.txt`, `detections.txt` and `curve.csv`.
//! Any edit to those files that changes the result makes the suite fail.

use std::path::Path;

use mspd_core::eval::{apply_reasonable_filter, group_by_image, miss_rate_fppi_curve, ReasonableFilter};
use mspd_core::fusion::{
    baseline_fuse, caffm_fuse, ciem_enhance, default_reduction, fusion_trace, BaselineMode, CaffmParams, FusionParams,
};
use mspd_core::gradcheck::gradcheck_fusion;
use mspd_core::init::{random_kernel, random_tensor, rng};
use mspd_core::loss::{
    binary_cross_entropy, detection_loss, joint_loss, multiclass_cross_entropy, smooth_l1, AnchorSample, LossConfig,
    StageKind,
};
use mspd_core::tensor::{conv2d, same_padding, Shape};
use mspd_core::{ConvKernel, Tensor};

use crate::io::{self, format_curve, parse_annotations_str, parse_detections_str};

pub const ANNOTATIONS_FILE: &str = "annotations.txt";
pub const DETECTIONS_FILE: &str = "detections.txt";
pub const CURVE_FILE: &str = "curve.csv";

/// Hand-enumerated threshold sweep of the bundled fixture.
const FIXTURE_CURVE: [(f64, f64); 6] =
    [(0.0, 1.0), (0.0, 0.75), (1.0 / 3.0, 0.75), (1.0 / 3.0, 0.5), (2.0 / 3.0, 0.5), (2.0 / 3.0, 0.25)];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fixtures {
    pub annotations: String,
    pub detections: String,
    pub curve_csv: String,
}

impl Fixtures {
    pub fn bundled() -> Self {
        Self {
            annotations: include_str!("../fixtures/eval/annotations.txt").into(),
            detections: include_str!("../fixtures/eval/detections.txt").into(),
            curve_csv: include_str!("../fixtures/eval/curve.csv").into(),
        }
    }

    pub fn load(dir: &Path) -> io::Result<Self> {
        Ok(Self {
            annotations: io::read(&dir.join(ANNOTATIONS_FILE))?,
            detections: io::read(&dir.join(DETECTIONS_FILE))?,
            curve_csv: io::read(&dir.join(CURVE_FILE))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub suite: &'static str,
    pub name: &'static str,
    pub outcome: Result<(), String>,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.outcome.is_ok()
    }
}

type Check = Result<(), String>;
type CheckFn<'a> = Box<dyn Fn() -> Check + 'a>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Quadruple loop over output pixel, output channel, kernel offset and
/// input channel, with explicit zero padding.
pub fn direct_conv2d(input: &Tensor, k: &ConvKernel, pad: usize) -> Tensor {
    let (w, h) = (input.width() + 2 * pad + 1 - k.size(), input.height() + 2 * pad + 1 - k.size());
    let shape = Shape::new(w, h, k.out_channels()).expect("non-empty output");
    Tensor::from_fn(shape, |x, y, co| {
        let mut acc = k.bias()[co];
        for kx in 0..k.size() {
            for ky in 0..k.size() {
                let (ix, iy) = ((x + kx) as isize - pad as isize, (y + ky) as isize - pad as isize);
                if ix < 0 || iy < 0 || ix as usize >= input.width() || iy as usize >= input.height() {
                    continue;
                }
                for ci in 0..k.in_channels() {
                    acc += input.get(ix as usize, iy as usize, ci) * k.weight(kx, ky, ci, co);
                }
            }
        }
        acc
    })
}

fn conv_oracle(seed: u64) -> Check {
    let mut r = rng(seed);
    let sizes = [1, 3, 7];
    for case in 0..20 {
        let size = sizes[case % 3];
        let shape = Shape::new(2 + case % 7, 1 + (case * 5) % 8, 1 + case % 4).map_err(err)?;
        let co = 1 + (case * 3) % 4;
        let input = random_tensor(&mut r, shape, 1.0);
        let k = random_kernel(&mut r, size, shape.channels, co);
        let fast = conv2d(&input, &k, same_padding(&k)).map_err(err)?;
        let slow = direct_conv2d(&input, &k, same_padding(&k));
        let diff = fast.data().iter().zip(slow.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ensure(fast.shape() == slow.shape() && diff <= 1e-12, || format!("case {case}: max abs diff {diff:e}"))?;
    }
    Ok(())
}

fn gradcheck(seed: u64) -> Check {
    let shape = Shape::new(5, 5, 4).map_err(err)?;
    let mut r = rng(seed);
    let p = FusionParams::random(&mut r, 4, default_reduction(4)).map_err(err)?;
    let (a, b, g) =
        (random_tensor(&mut r, shape, 1.0), random_tensor(&mut r, shape, 1.0), random_tensor(&mut r, shape, 1.0));
    let report = gradcheck_fusion(&a, &b, &p, &g).map_err(err)?;
    let worst = report.worst().ok_or("empty report")?;
    ensure(report.passed(), || format!("{} max relative error {:e}", worst.target.name(), worst.max_rel_error))
}

fn attention_ranges(seed: u64) -> Check {
    let shape = Shape::new(5, 5, 4).map_err(err)?;
    for trial in 0..20 {
        let mut r = rng(seed.wrapping_add(trial));
        let p = FusionParams::random(&mut r, 4, default_reduction(4)).map_err(err)?;
        let t =
            fusion_trace(&random_tensor(&mut r, shape, 1.0), &random_tensor(&mut r, shape, 1.0), &p).map_err(err)?;
        let all = [
            t.ciem.channel_weights().data(),
            t.ciem.spatial_weights().data(),
            t.caffm.thermal_weights().data(),
            t.caffm.color_weights().data(),
            t.caffm.global_weights().data(),
        ];
        let bad = all.iter().flat_map(|w| w.iter()).filter(|&&v| !(v > 0.0 && v < 1.0)).count();
        ensure(bad == 0, || format!("trial {trial}: {bad} weights outside (0, 1)"))?;
    }
    Ok(())
}

fn symmetries(seed: u64) -> Check {
    let shape = Shape::new(5, 5, 4).map_err(err)?;
    for trial in 0..20 {
        let mut r = rng(seed.wrapping_add(trial));
        let p = FusionParams::random(&mut r, 4, default_reduction(4)).map_err(err)?;
        let f = random_tensor(&mut r, shape, 1.0);
        let (ec, et) = ciem_enhance(&f, &f, p.ciem()).map_err(err)?;
        ensure(ec.data().iter().zip(et.data()).all(|(a, b)| a.to_bits() == b.to_bits()), || {
            format!("trial {trial}: identical modalities enhanced differently")
        })?;
        let cp = CaffmParams::random(&mut r, 4).map_err(err)?;
        let (x, y) = (random_tensor(&mut r, shape, 1.0), random_tensor(&mut r, shape, 1.0));
        let a = caffm_fuse(&x, &y, &cp).map_err(err)?;
        let b = caffm_fuse(&y, &x, &cp.swapped()).map_err(err)?;
        let diff = a.data().iter().zip(b.data()).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        ensure(diff <= 1e-12, || format!("trial {trial}: relabelled fusion differs by {diff:e}"))?;
    }
    Ok(())
}

fn baseline_identities(seed: u64) -> Check {
    let shape = Shape::new(4, 4, 3).map_err(err)?;
    let mut r = rng(seed);
    let (a, b) = (random_tensor(&mut r, shape, 1.0), random_tensor(&mut r, shape, 1.0));
    let add0 = baseline_fuse(&a, &Tensor::zeros(shape), BaselineMode::Add, None).map_err(err)?;
    let mul1 = baseline_fuse(&a, &Tensor::filled(shape, 1.0), BaselineMode::Mul, None).map_err(err)?;
    ensure(add0 == a && mul1 == a, || "add-zero or mul-one changed the input".into())?;
    let proj = random_kernel(&mut r, 1, 6, 3);
    let outs = [
        baseline_fuse(&a, &b, BaselineMode::Cascade, Some(&proj)).map_err(err)?,
        baseline_fuse(&a, &b, BaselineMode::Add, None).map_err(err)?,
        baseline_fuse(&a, &b, BaselineMode::Mul, None).map_err(err)?,
    ];
    ensure(outs[0] != outs[1] && outs[0] != outs[2] && outs[1] != outs[2], || "baseline modes coincide".into())
}

fn close(what: &str, got: f64, want: f64, tol: f64) -> Check {
    ensure((got - want).abs() <= tol, || format!("{what}: got {got}, expected {want}"))
}

fn smooth_l1_forms() -> Check {
    for sigma in [1.0, 3.0] {
        let s2: f64 = sigma * sigma;
        let knot = 1.0 / s2;
        let quadratic = 0.5 * s2 * knot * knot;
        let linear = knot - 0.5 / s2;
        ensure(quadratic - linear == 0.0, || format!("sigma {sigma}: branches differ at the knot"))?;
        close("smooth_l1 at knot", smooth_l1(knot, sigma).map_err(err)?, linear, 0.0)?;
    }
    close("smooth_l1(2, 1)", smooth_l1(2.0, 1.0).map_err(err)?, 1.5, 0.0)?;
    close("smooth_l1(0, 3)", smooth_l1(0.0, 3.0).map_err(err)?, 0.0, 0.0)
}

fn cross_entropy_forms() -> Check {
    let ln2 = std::f64::consts::LN_2;
    close("bce(0.5, 1)", binary_cross_entropy(0.5, true), ln2, 1e-12)?;
    close("bce(0.5, 0)", binary_cross_entropy(0.5, false), ln2, 1e-12)?;
    close("bce(0.9, 0)", binary_cross_entropy(0.9, false), -(0.1f64).ln(), 1e-12)?;
    close("ce(uniform4)", multiclass_cross_entropy(&[0.25; 4], 2).map_err(err)?, 4f64.ln(), 1e-12)?;
    let e1 = (-1.0f64).exp();
    close("ce(e^-1)", multiclass_cross_entropy(&[e1, 1.0 - e1], 0).map_err(err)?, 1.0, 1e-12)
}

fn detection_loss_fixtures() -> Check {
    let one = LossConfig::new(1.0, 1.0, 1.0, 1.0).map_err(err)?;
    let pos = AnchorSample::binary(1.0, true, [2.0, 0.0, 0.0, 0.0], [0.0; 4]).map_err(err)?;
    close("single positive", detection_loss(&[pos], &one, StageKind::Rpn).map_err(err)?.total, 1.5, 1e-11)?;
    let neg = AnchorSample::binary(0.0, false, [9.0, -4.0, 3.0, 1.0], [0.0; 4]).map_err(err)?;
    let l = detection_loss(&[neg], &one, StageKind::Rpn).map_err(err)?;
    close("negative regression", l.reg, 0.0, 0.0)?;
    close("perfect negative", l.total, 0.0, 1e-11)?;
    let fr = AnchorSample::multiclass(vec![0.0, 1.0, 0.0], 1, [0.5; 4], [0.5; 4]).map_err(err)?;
    let fr_total =
        detection_loss(&[fr], &LossConfig::fast_rcnn(1.0, 1.0).map_err(err)?, StageKind::FastRcnn).map_err(err)?.total;
    close("perfect fast-rcnn", fr_total, 0.0, 1e-11)?;
    close("joint", joint_loss(1.5, 2.5).map_err(err)?, 4.0, 0.0)
}

fn eval_fixture(f: &Fixtures) -> Check {
    let ann = parse_annotations_str(&f.annotations, ANNOTATIONS_FILE).map_err(err)?;
    let dets = parse_detections_str(&f.detections, DETECTIONS_FILE).map_err(err)?;
    let gts = apply_reasonable_filter(&ann.boxes().cloned().collect::<Vec<_>>(), &ReasonableFilter::default());
    let images = group_by_image(dets.boxes().cloned().collect(), gts);
    let curve = miss_rate_fppi_curve(&images, 0.5).map_err(err)?;
    let got: Vec<(f64, f64)> = curve.points().iter().map(|p| (p.fppi, p.miss_rate)).collect();
    ensure(
        got.len() == FIXTURE_CURVE.len()
            && got.iter().zip(&FIXTURE_CURVE).all(|(g, e)| (g.0 - e.0).abs() <= 1e-9 && (g.1 - e.1).abs() <= 1e-9),
        || format!("curve {got:?} differs from the hand sweep"),
    )?;
    let lamr = (0.75f64.powi(7) * 0.5 * 0.25).powf(1.0 / 9.0);
    close("log-average miss rate", curve.log_average_mr(), lamr, 1e-9)?;
    ensure(format_curve(&curve) == f.curve_csv, || format!("exported CSV differs from {CURVE_FILE}"))
}

/// Runs every check; `seed` drives the randomized ones.
pub fn run_selftest(fixtures: &Fixtures, seed: u64) -> Vec<CheckResult> {
    let checks: [(&'static str, &'static str, CheckFn<'_>); 10] = [
        ("tensor-core", "conv2d matches direct loops", Box::new(move || conv_oracle(seed))),
        ("tensor-core", "fusion gradients match finite differences", Box::new(move || gradcheck(seed))),
        ("tensor-core", "attention weights in (0, 1)", Box::new(move || attention_ranges(seed))),
        ("tensor-core", "modality symmetries", Box::new(move || symmetries(seed))),
        ("tensor-core", "baseline fusion identities", Box::new(move || baseline_identities(seed))),
        ("losses", "smooth-L1 closed forms", Box::new(smooth_l1_forms)),
        ("losses", "cross-entropy closed forms", Box::new(cross_entropy_forms)),
        ("losses", "detection loss fixtures", Box::new(detection_loss_fixtures)),
        ("eval", "fixture curve matches hand sweep", Box::new(|| eval_fixture(fixtures))),
        ("eval", "fppi sample abscissae", Box::new(fppi_abscissae)),
    ];
    checks.into_iter().map(|(suite, name, f)| CheckResult { suite, name, outcome: f() }).collect()
}

fn fppi_abscissae() -> Check {
    let s = mspd_core::eval::fppi_samples();
    for (k, v) in s.iter().enumerate() {
        close("fppi sample", *v, 10f64.powf(-2.0 + k as f64 / 4.0), 1e-15)?;
    }
    Ok(())
}
