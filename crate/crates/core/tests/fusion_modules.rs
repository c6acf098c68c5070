mod common;

use common::*;
use mspd_core::fusion::*;
use mspd_core::gradcheck::{check_fusion_gradients, gradcheck_fusion, Target, DEFAULT_STEP, DEFAULT_TOLERANCE};
use mspd_core::init::{random_kernel, ChaCha8Rng};
use mspd_core::tensor::*;

fn params(r: &mut ChaCha8Rng, c: usize) -> FusionParams {
    FusionParams::random(r, c, default_reduction(c)).unwrap()
}

fn hand_fuse(f_c: &Tensor, f_t: &Tensor, p: &CiemParams) -> Tensor {
    let cat = concat_channels(f_c, f_t).unwrap();
    let a = conv2d(&cat, p.conv1(), 0).unwrap();
    let b = conv2d(&a, p.conv3(), 1).unwrap();
    let c = batchnorm_infer(&b, p.bn()).unwrap();
    activate(Activation::Relu, &c)
}

fn hand_cam(f: &Tensor, p: &CiemParams) -> ChannelVector {
    let mlp = |d: ChannelVector| {
        let h = activate(Activation::Relu, &p.cam_w1().apply(&d).unwrap());
        p.cam_w2().apply(&h).unwrap()
    };
    let a = mlp(global_avg_pool(f));
    let m = mlp(global_max_pool(f));
    let s = ChannelVector::new(a.data().iter().zip(m.data()).map(|(x, y)| x + y).collect()).unwrap();
    activate(Activation::Sigmoid, &s)
}

fn hand_pam(f: &Tensor, p: &CiemParams) -> SpatialMap {
    let avg = channel_pool(f, PoolKind::Avg).to_tensor();
    let max = channel_pool(f, PoolKind::Max).to_tensor();
    let logits = conv2d(&concat_channels(&avg, &max).unwrap(), p.pam_conv(), 3).unwrap();
    activate(Activation::Sigmoid, &logits).to_spatial_map().unwrap()
}

#[test]
fn ciem_fuse_matches_hand_pipeline() {
    let mut r = seeded(100);
    let p = params(&mut r, 2);
    let (a, b) = (rand_tensor(&mut r, shape(4, 4, 2)), rand_tensor(&mut r, shape(4, 4, 2)));
    assert_eq!(ciem_fuse(&a, &b, p.ciem()).unwrap(), hand_fuse(&a, &b, p.ciem()));
}

#[test]
fn spatial_attention_matches_hand_pipeline() {
    let mut r = seeded(101);
    let p = CiemParams::random(&mut r, 3, 1).unwrap();
    let f = rand_tensor(&mut r, shape(5, 5, 3));
    assert_eq!(spatial_attention(&f, &p).unwrap(), hand_pam(&f, &p));
}

#[test]
fn channel_attention_on_constant_input_doubles_one_branch() {
    let mut r = seeded(102);
    let p = CiemParams::random(&mut r, 4, 2).unwrap();
    let f = Tensor::filled(shape(3, 3, 4), 0.7);
    let d = ChannelVector::filled(4, 0.7);
    let h = activate(Activation::Relu, &p.cam_w1().apply(&d).unwrap());
    let o = p.cam_w2().apply(&h).unwrap();
    let w = channel_attention(&f, &p).unwrap();
    for (wi, oi) in w.data().iter().zip(o.data()) {
        assert!((wi - sigmoid(2.0 * oi)).abs() < 1e-15);
    }
}

#[test]
fn ciem_enhance_matches_composition_of_public_ops() {
    let mut r = seeded(103);
    let p = params(&mut r, 4);
    let s = shape(5, 4, 4);
    let (a, b) = (rand_tensor(&mut r, s), rand_tensor(&mut r, s));
    let fused = ciem_fuse(&a, &b, p.ciem()).unwrap();
    let w_ca = channel_attention(&fused, p.ciem()).unwrap();
    let weighted = broadcast_combine(&fused, &w_ca, Combine::Mul).unwrap();
    let w_pa = spatial_attention(&weighted, p.ciem()).unwrap();
    let apply = |f: &Tensor| {
        broadcast_combine(&broadcast_combine(f, &w_ca, Combine::Mul).unwrap(), &w_pa, Combine::Mul).unwrap()
    };
    let (ea, eb) = ciem_enhance(&a, &b, p.ciem()).unwrap();
    assert_eq!(ea, apply(&a));
    assert_eq!(eb, apply(&b));
    assert_eq!(hand_cam(&fused, p.ciem()), w_ca);
}

#[test]
fn caffm_fuse_matches_composition_of_public_ops() {
    let mut r = seeded(104);
    let p = params(&mut r, 3);
    let s = shape(4, 4, 3);
    let (fc, ft) = (rand_tensor(&mut r, s), rand_tensor(&mut r, s));
    let cp = p.caffm();
    let w_t = caffm_cross_weights(&ft, cp.conv_t()).unwrap();
    let w_c = caffm_cross_weights(&fc, cp.conv_c()).unwrap();
    let ct = caffm_complement(&fc, &w_t).unwrap();
    let tc = caffm_complement(&ft, &w_c).unwrap();
    let global = ChannelVector::new(ct.data().iter().zip(tc.data()).map(|(a, b)| a + b).collect()).unwrap();
    let w_ct = caffm_cross_weights(&global.to_tensor(), cp.conv_g()).unwrap();
    let sum = broadcast_combine(&ft, &fc, Combine::Add).unwrap();
    let expected = broadcast_combine(&sum, &w_ct, Combine::Mul).unwrap();
    assert_eq!(caffm_fuse(&fc, &ft, cp).unwrap(), expected);
}

#[test]
fn fusion_forward_is_enhance_then_fuse() {
    let mut r = seeded(105);
    let p = params(&mut r, 4);
    let s = shape(5, 5, 4);
    let (a, b) = (rand_tensor(&mut r, s), rand_tensor(&mut r, s));
    let (ea, eb) = ciem_enhance(&a, &b, p.ciem()).unwrap();
    let out = fusion_forward(&a, &b, &p).unwrap();
    assert_eq!(out, caffm_fuse(&ea, &eb, p.caffm()).unwrap());
    assert_eq!(out.shape(), s);
    assert_eq!(out, fusion_forward(&a, &b, &p).unwrap());
}

#[test]
fn zero_and_identical_inputs_stay_finite() {
    let mut r = seeded(106);
    let p = params(&mut r, 4);
    let s = shape(5, 5, 4);
    let z = Tensor::zeros(s);
    let out = fusion_forward(&z, &z, &p).unwrap();
    assert!(out.data().iter().all(|v| v.is_finite()));
    let f = rand_tensor(&mut r, s);
    assert!(fusion_forward(&f, &f, &p).unwrap().data().iter().all(|v| v.is_finite()));
}

#[test]
fn attention_weights_stay_in_open_unit_interval() {
    let mut violations = 0;
    for seed in 0..100 {
        let mut r = seeded(seed);
        let p = params(&mut r, 4);
        let s = shape(5, 5, 4);
        let (a, b) = (rand_tensor(&mut r, s), rand_tensor(&mut r, s));
        let t = fusion_trace(&a, &b, &p).unwrap();
        let weights = [
            t.ciem.channel_weights().data(),
            t.ciem.spatial_weights().data(),
            t.caffm.thermal_weights().data(),
            t.caffm.color_weights().data(),
            t.caffm.global_weights().data(),
        ];
        violations += weights.iter().flat_map(|w| w.iter()).filter(|&&v| !(v > 0.0 && v < 1.0)).count();
    }
    assert_eq!(violations, 0);
}

#[test]
fn enhancement_contracts_both_modalities() {
    for seed in 0..20 {
        let mut r = seeded(500 + seed);
        let p = params(&mut r, 4);
        let s = shape(4, 5, 4);
        let (a, b) = (rand_tensor(&mut r, s), rand_tensor(&mut r, s));
        let (ea, eb) = ciem_enhance(&a, &b, p.ciem()).unwrap();
        for (e, x) in ea.data().iter().zip(a.data()).chain(eb.data().iter().zip(b.data())) {
            assert!(e.abs() <= x.abs());
        }
    }
}

#[test]
fn modality_symmetry_is_bit_exact() {
    for seed in 0..100 {
        let mut r = seeded(1000 + seed);
        let p = params(&mut r, 4);
        let f = rand_tensor(&mut r, shape(5, 5, 4));
        let (a, b) = ciem_enhance(&f, &f, p.ciem()).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn joint_relabel_symmetry() {
    for seed in 0..50 {
        let mut r = seeded(2000 + seed);
        let p = CaffmParams::random(&mut r, 4).unwrap();
        let s = shape(5, 5, 4);
        let (fc, ft) = (rand_tensor(&mut r, s), rand_tensor(&mut r, s));
        let a = caffm_fuse(&fc, &ft, &p).unwrap();
        let b = caffm_fuse(&ft, &fc, &p.swapped()).unwrap();
        assert!(max_abs_diff(a.data(), b.data()) <= 1e-12);
    }
}

fn gradcheck_case(seed: u64, s: mspd_core::tensor::Shape, reduction: usize) {
    let mut r = seeded(seed);
    let p = FusionParams::random(&mut r, s.channels, reduction).unwrap();
    let (a, b, g) = (rand_tensor(&mut r, s), rand_tensor(&mut r, s), rand_tensor(&mut r, s));
    let report = gradcheck_fusion(&a, &b, &p, &g).unwrap();
    assert_eq!(report.groups.len(), 20);
    for gr in &report.groups {
        assert!(gr.max_rel_error < DEFAULT_TOLERANCE, "{}: {:e}", gr.target.name(), gr.max_rel_error);
        assert!(gr.straddled < gr.probes, "{} never probed", gr.target.name());
    }
}

#[test]
fn fusion_backward_matches_finite_differences() {
    gradcheck_case(42, shape(5, 5, 4), 4);
    gradcheck_case(7, shape(5, 5, 4), 2);
    gradcheck_case(8, shape(6, 4, 8), 4);
}

#[test]
fn attention_mlp_gradient_is_exercised() {
    // seed 42 keeps the single hidden unit of the 4-channel MLP active
    let mut r = seeded(42);
    let p = FusionParams::random(&mut r, 4, 4).unwrap();
    let s = shape(5, 5, 4);
    let (a, b, g) = (rand_tensor(&mut r, s), rand_tensor(&mut r, s), rand_tensor(&mut r, s));
    let grads = fusion_backward(&a, &b, &p, &g).unwrap();
    assert!(grads.params.get(ParamGroup::CamW1).iter().any(|&v| v != 0.0));
    assert!(grads.params.get(ParamGroup::CamW2).iter().any(|&v| v != 0.0));
}

#[test]
fn zero_upstream_gradient_gives_zero_everywhere() {
    let mut r = seeded(3);
    let p = params(&mut r, 4);
    let s = shape(5, 5, 4);
    let (a, b) = (rand_tensor(&mut r, s), rand_tensor(&mut r, s));
    let grads = fusion_backward(&a, &b, &p, &Tensor::zeros(s)).unwrap();
    assert!(grads.f_c.data().iter().chain(grads.f_t.data()).all(|&v| v == 0.0));
    for (g, v) in grads.params.iter() {
        assert!(v.iter().all(|&x| x == 0.0), "{g}");
    }
}

#[test]
fn dead_gate_blocks_its_kernel_gradient() {
    // A strongly negative conv_t bias keeps the thermal gate's ReLU at zero,
    // so nothing upstream of it can receive gradient through that path.
    let mut r = seeded(4);
    let p = params(&mut r, 4);
    let dead = ConvKernel::new(1, 4, 4, p.caffm().conv_t().weights().to_vec(), vec![-100.0; 4]).unwrap();
    let caffm = CaffmParams::new(dead, p.caffm().conv_c().clone(), p.caffm().conv_g().clone()).unwrap();
    let p = FusionParams::new(p.ciem().clone(), caffm).unwrap();
    let s = shape(5, 5, 4);
    let (a, b, g) = (rand_tensor(&mut r, s), rand_tensor(&mut r, s), rand_tensor(&mut r, s));
    let grads = fusion_backward(&a, &b, &p, &g).unwrap();
    assert!(grads.params.get(ParamGroup::ConvTWeight).iter().all(|&v| v == 0.0));
    assert!(grads.params.get(ParamGroup::ConvTBias).iter().all(|&v| v == 0.0));
}

#[test]
fn corrupted_gradient_is_detected() {
    let mut r = seeded(42);
    let p = params(&mut r, 4);
    let s = shape(5, 5, 4);
    let (a, b, g) = (rand_tensor(&mut r, s), rand_tensor(&mut r, s), rand_tensor(&mut r, s));
    let mut grads = fusion_backward(&a, &b, &p, &g).unwrap();
    Target::Param(ParamGroup::PamWeight).of_mut(&mut grads)[5] += 1e-2;
    let report = check_fusion_gradients(&a, &b, &p, &g, &grads, DEFAULT_STEP, DEFAULT_TOLERANCE).unwrap();
    assert!(!report.passed());
    assert_eq!(report.worst().unwrap().target, Target::Param(ParamGroup::PamWeight));
}

#[test]
fn baseline_modes_differ_on_generic_inputs() {
    let mut r = seeded(9);
    let s = shape(4, 4, 3);
    let (a, b) = (rand_tensor(&mut r, s), rand_tensor(&mut r, s));
    let proj = random_kernel(&mut r, 1, 6, 3);
    let cas = baseline_fuse(&a, &b, BaselineMode::Cascade, Some(&proj)).unwrap();
    let add = baseline_fuse(&a, &b, BaselineMode::Add, None).unwrap();
    let mul = baseline_fuse(&a, &b, BaselineMode::Mul, None).unwrap();
    assert_ne!(cas, add);
    assert_ne!(cas, mul);
    assert_ne!(add, mul);
}

#[test]
fn shape_mismatch_propagates() {
    let mut r = seeded(10);
    let p = params(&mut r, 4);
    let a = rand_tensor(&mut r, shape(5, 5, 4));
    let b = rand_tensor(&mut r, shape(5, 4, 4));
    assert!(fusion_forward(&a, &b, &p).is_err());
    assert!(fusion_backward(&a, &a, &p, &b).is_err());
}
