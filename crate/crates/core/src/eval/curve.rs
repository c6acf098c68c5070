use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::boxes::{DetectionBox, GroundTruthBox};
use super::matching::{assign_detections, check_iou_threshold, MatchOutcome};
use crate::error::{Error, Result};

/// Number of FPPI abscissae averaged by [`log_average_mr`].
pub const FPPI_SAMPLE_COUNT: usize = 9;

/// Miss rates are floored here before taking logarithms.
pub const MISS_RATE_FLOOR: f64 = 1e-10;

/// Detections and ground truth of one evaluated image.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalImage {
    pub image_id: String,
    pub detections: Vec<DetectionBox>,
    pub ground_truth: Vec<GroundTruthBox>,
}

/// Groups boxes by image id. Every id appearing in either list becomes an
/// image; images are ordered by id.
pub fn group_by_image(detections: Vec<DetectionBox>, ground_truth: Vec<GroundTruthBox>) -> Vec<EvalImage> {
    fn slot<'a>(images: &'a mut BTreeMap<String, EvalImage>, id: &str) -> &'a mut EvalImage {
        images.entry(String::from(id)).or_insert_with(|| EvalImage {
            image_id: String::from(id),
            detections: Vec::new(),
            ground_truth: Vec::new(),
        })
    }
    let mut images = BTreeMap::new();
    for d in detections {
        slot(&mut images, &d.image_id).detections.push(d);
    }
    for g in ground_truth {
        slot(&mut images, &g.image_id).ground_truth.push(g);
    }
    images.into_values().collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub fppi: f64,
    pub miss_rate: f64,
}

/// Miss rate against false positives per image, plus its log-average.
#[derive(Debug, Clone, PartialEq)]
pub struct MissRateCurve {
    points: Vec<CurvePoint>,
    log_average_mr: f64,
}

impl MissRateCurve {
    /// Sorts by FPPI (higher miss rate first among equal FPPI), replaces each
    /// miss rate by the running minimum, and computes the log-average.
    pub fn from_points(mut points: Vec<CurvePoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Evaluation("curve has no points".into()));
        }
        if let Some(p) =
            points.iter().find(|p| !(p.fppi >= 0.0 && p.fppi.is_finite()) || !(0.0..=1.0).contains(&p.miss_rate))
        {
            return Err(Error::Evaluation(format!("invalid curve point ({}, {})", p.fppi, p.miss_rate)));
        }
        points.sort_by(|a, b| a.fppi.total_cmp(&b.fppi).then(b.miss_rate.total_cmp(&a.miss_rate)));
        let mut running = f64::INFINITY;
        for p in &mut points {
            running = running.min(p.miss_rate);
            p.miss_rate = running;
        }
        let log_average_mr = log_average_mr(&points)?;
        Ok(Self { points, log_average_mr })
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    pub fn log_average_mr(&self) -> f64 {
        self.log_average_mr
    }
}

/// `10^(-2 + k/4)` for `k = 0..=8`: nine log-spaced values over `[0.01, 1]`.
pub fn fppi_samples() -> [f64; FPPI_SAMPLE_COUNT] {
    core::array::from_fn(|k| libm::pow(10.0, -2.0 + k as f64 / 4.0))
}

/// Geometric mean of the miss rate sampled at [`fppi_samples`].
///
/// `points` must be sorted by FPPI. Each sample takes the miss rate of the
/// last point whose FPPI does not exceed it, or of the first point when the
/// sample lies left of the whole curve.
pub fn log_average_mr(points: &[CurvePoint]) -> Result<f64> {
    let first = points.first().ok_or_else(|| Error::Evaluation("curve has no points".into()))?;
    let mut log_sum = 0.0;
    for s in fppi_samples() {
        let m = points.iter().rev().find(|p| p.fppi <= s).unwrap_or(first).miss_rate;
        log_sum += libm::log(m.max(MISS_RATE_FLOOR));
    }
    Ok(libm::exp(log_sum / FPPI_SAMPLE_COUNT as f64))
}

/// Sweeps the score threshold over every distinct detection score (and
/// above the highest one), aggregating matches over all images.
///
/// Each threshold yields `FPPI = FP / images` and `miss rate = FN / (TP + FN)`.
pub fn miss_rate_fppi_curve(images: &[EvalImage], iou_threshold: f64) -> Result<MissRateCurve> {
    check_iou_threshold(iou_threshold)?;
    if images.is_empty() {
        return Err(Error::Evaluation("no images to evaluate".into()));
    }
    let positives: usize = images.iter().map(|im| im.ground_truth.iter().filter(|g| !g.ignore).count()).sum();
    if positives == 0 {
        return Err(Error::Evaluation("no non-ignored ground-truth boxes".into()));
    }

    // Greedy matching in score order means the matches at any threshold are
    // exactly the matches of the kept prefix, so one pass per image suffices.
    let mut scored: Vec<(f64, MatchOutcome)> = Vec::new();
    for im in images {
        let (outcomes, _) = assign_detections(&im.detections, &im.ground_truth, iou_threshold)?;
        scored.extend(outcomes.into_iter().map(|(d, o)| (im.detections[d].score, o)));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    let n_images = images.len() as f64;
    let point = |tp: usize, fp: usize| CurvePoint {
        fppi: fp as f64 / n_images,
        miss_rate: (positives - tp) as f64 / positives as f64,
    };
    let mut points = alloc::vec![point(0, 0)];
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < scored.len() {
        let score = scored[i].0;
        while i < scored.len() && scored[i].0 == score {
            match scored[i].1 {
                MatchOutcome::TruePositive => tp += 1,
                MatchOutcome::FalsePositive => fp += 1,
                MatchOutcome::Ignored => {}
            }
            i += 1;
        }
        points.push(point(tp, fp));
    }
    MissRateCurve::from_points(points)
}

#[cfg(test)]
mod tests {
    use super::super::boxes::{BBox, Category, Occlusion};
    use super::*;
    use alloc::vec;

    fn gt(img: &str, x: f64) -> GroundTruthBox {
        GroundTruthBox::new(img, BBox::new(x, 0.0, 20.0, 60.0).unwrap(), Category::Person, Occlusion::None)
    }

    fn det(img: &str, x: f64, score: f64) -> DetectionBox {
        DetectionBox::new(img, BBox::new(x, 0.0, 20.0, 60.0).unwrap(), score).unwrap()
    }

    fn pt(fppi: f64, miss_rate: f64) -> CurvePoint {
        CurvePoint { fppi, miss_rate }
    }

    /// Three images, four targets; detection IoUs 1, 0, 0.818, 1/3, 0.6.
    fn fixture() -> Vec<EvalImage> {
        group_by_image(
            vec![
                det("a", 0.0, 0.9),
                det("a", 300.0, 0.8),
                det("b", 2.0, 0.7),
                det("c", 60.0, 0.6),
                det("a", 105.0, 0.5),
            ],
            vec![gt("a", 0.0), gt("a", 100.0), gt("b", 0.0), gt("c", 50.0)],
        )
    }

    #[test]
    fn fixture_sweep_by_hand() {
        let curve = miss_rate_fppi_curve(&fixture(), 0.5).unwrap();
        let third = 1.0 / 3.0;
        let expected =
            [pt(0.0, 1.0), pt(0.0, 0.75), pt(third, 0.75), pt(third, 0.5), pt(2.0 * third, 0.5), pt(2.0 * third, 0.25)];
        assert_eq!(curve.points(), &expected);
        // samples 0.01 ..= 10^-0.5 sit left of 1/3, then 10^-0.25 and 1
        let lamr = libm::pow(libm::pow(0.75, 7.0) * 0.5 * 0.25, 1.0 / 9.0);
        assert!((curve.log_average_mr() - lamr).abs() < 1e-12);
    }

    #[test]
    fn perfect_detector_reaches_zero() {
        let images = group_by_image(vec![det("a", 0.0, 0.9), det("b", 0.0, 0.8)], vec![gt("a", 0.0), gt("b", 0.0)]);
        let curve = miss_rate_fppi_curve(&images, 0.5).unwrap();
        assert!(curve.points().contains(&pt(0.0, 0.0)));
        assert!((curve.log_average_mr() - MISS_RATE_FLOOR).abs() < 1e-20);
    }

    #[test]
    fn no_detections_gives_single_point() {
        let images = group_by_image(vec![], vec![gt("a", 0.0)]);
        let curve = miss_rate_fppi_curve(&images, 0.5).unwrap();
        assert_eq!(curve.points(), &[pt(0.0, 1.0)]);
        assert_eq!(curve.log_average_mr(), 1.0);
    }

    #[test]
    fn rejects_empty_inputs() {
        assert!(miss_rate_fppi_curve(&[], 0.5).is_err());
        let only_dets = group_by_image(vec![det("a", 0.0, 0.5)], vec![]);
        assert!(miss_rate_fppi_curve(&only_dets, 0.5).is_err());
        let mut ignored = gt("a", 0.0);
        ignored.ignore = true;
        assert!(miss_rate_fppi_curve(&group_by_image(vec![], vec![ignored]), 0.5).is_err());
        assert!(log_average_mr(&[]).is_err());
        assert!(MissRateCurve::from_points(vec![]).is_err());
    }

    #[test]
    fn sample_abscissae() {
        let s = fppi_samples();
        assert_eq!(s[0], 0.01);
        assert_eq!(s[8], 1.0);
        for w in s.windows(2) {
            assert!((w[1] / w[0] - libm::pow(10.0, 0.25)).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_and_geometric_curves() {
        let c = MissRateCurve::from_points(vec![pt(0.0, 0.1), pt(5.0, 0.1)]).unwrap();
        assert!((c.log_average_mr() - 0.1).abs() < 1e-12);
        let (g, r) = (0.8, 0.7);
        let points: Vec<_> =
            fppi_samples().iter().enumerate().map(|(k, &s)| pt(s, g * libm::pow(r, k as f64))).collect();
        let lamr = log_average_mr(&points).unwrap();
        assert!((lamr - g * libm::pow(r, 4.0)).abs() < 1e-12);
    }

    #[test]
    fn samples_left_of_curve_use_first_point() {
        let c = MissRateCurve::from_points(vec![pt(0.5, 0.4), pt(2.0, 0.2)]).unwrap();
        // seven samples below 0.5 fall back to 0.4; 10^-0.25 and 1 use 0.4 too
        assert!((c.log_average_mr() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn from_points_sorts_and_enforces_monotonicity() {
        let c = MissRateCurve::from_points(vec![pt(1.0, 0.3), pt(0.0, 0.9), pt(0.5, 0.6), pt(0.7, 0.65)]).unwrap();
        assert_eq!(c.points(), &[pt(0.0, 0.9), pt(0.5, 0.6), pt(0.7, 0.6), pt(1.0, 0.3)]);
        assert!(MissRateCurve::from_points(vec![pt(-1.0, 0.5)]).is_err());
        assert!(MissRateCurve::from_points(vec![pt(0.0, 1.5)]).is_err());
    }

    #[test]
    fn grouping_orders_images_by_id() {
        let images = fixture();
        let ids: Vec<&str> = images.iter().map(|i| i.image_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(images[0].detections.len(), 3);
        assert_eq!(images[0].ground_truth.len(), 2);
    }
}
