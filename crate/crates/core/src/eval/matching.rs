use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::boxes::{iou, DetectionBox, GroundTruthBox};
use crate::error::{Error, Result};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// True/false positive and false negative counts for one image or a set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl core::ops::Add for MatchCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self { tp: self.tp + o.tp, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_ }
    }
}

impl core::iter::Sum for MatchCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

/// What a single detection turned into during greedy matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchOutcome {
    TruePositive,
    FalsePositive,
    /// Overlapped only an ignored ground-truth box.
    Ignored,
}

pub(crate) fn check_iou_threshold(t: f64) -> Result<()> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::InvalidParameter { name: "iou_threshold", reason: format!("{t} is outside (0, 1]") });
    }
    Ok(())
}

/// Detection indices by descending score, ties kept in input order.
pub(crate) fn score_order(dets: &[DetectionBox]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    order
}

/// Greedy assignment in descending score order.
///
/// Each detection takes the unmatched non-ignored ground-truth box with the
/// highest IoU at or above the threshold (first box wins ties). Failing that,
/// a detection overlapping an ignored box is neutral; otherwise it is a
/// false positive. Returns `(detection index, outcome)` in processing order
/// together with the number of unmatched non-ignored ground-truth boxes.
pub fn assign_detections(
    dets: &[DetectionBox],
    gts: &[GroundTruthBox],
    iou_threshold: f64,
) -> Result<(Vec<(usize, MatchOutcome)>, usize)> {
    check_iou_threshold(iou_threshold)?;
    let mut taken = vec![false; gts.len()];
    let mut outcomes = Vec::with_capacity(dets.len());
    for d in score_order(dets) {
        let bbox = &dets[d].bbox;
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if gt.ignore || taken[g] {
                continue;
            }
            let o = iou(bbox, &gt.bbox);
            if o >= iou_threshold && best.is_none_or(|(_, b)| o > b) {
                best = Some((g, o));
            }
        }
        let outcome = match best {
            Some((g, _)) => {
                taken[g] = true;
                MatchOutcome::TruePositive
            }
            None if gts.iter().any(|gt| gt.ignore && iou(bbox, &gt.bbox) >= iou_threshold) => MatchOutcome::Ignored,
            None => MatchOutcome::FalsePositive,
        };
        outcomes.push((d, outcome));
    }
    let missed = gts.iter().zip(&taken).filter(|(gt, &t)| !gt.ignore && !t).count();
    Ok((outcomes, missed))
}

/// Counts for one image after discarding detections scoring below
/// `score_threshold`.
pub fn match_detections(
    dets: &[DetectionBox],
    gts: &[GroundTruthBox],
    iou_threshold: f64,
    score_threshold: f64,
) -> Result<MatchCounts> {
    let kept: Vec<DetectionBox> = dets.iter().filter(|d| d.score >= score_threshold).cloned().collect();
    let (outcomes, missed) = assign_detections(&kept, gts, iou_threshold)?;
    let count = |o: MatchOutcome| outcomes.iter().filter(|(_, x)| *x == o).count();
    Ok(MatchCounts { tp: count(MatchOutcome::TruePositive), fp: count(MatchOutcome::FalsePositive), fn_: missed })
}

#[cfg(test)]
mod tests {
    use super::super::boxes::{BBox, Category, Occlusion};
    use super::*;

    fn gt(x: f64, ignore: bool) -> GroundTruthBox {
        let mut g =
            GroundTruthBox::new("img", BBox::new(x, 0.0, 10.0, 60.0).unwrap(), Category::Person, Occlusion::None);
        g.ignore = ignore;
        g
    }

    fn det(x: f64, w: f64, score: f64) -> DetectionBox {
        DetectionBox::new("img", BBox::new(x, 0.0, w, 60.0).unwrap(), score).unwrap()
    }

    #[test]
    fn perfect_detections() {
        let gts = [gt(0.0, false), gt(100.0, false)];
        let dets = [det(0.0, 10.0, 0.9), det(100.0, 10.0, 0.8)];
        assert_eq!(
            match_detections(&dets, &gts, 0.5, f64::NEG_INFINITY).unwrap(),
            MatchCounts { tp: 2, fp: 0, fn_: 0 }
        );
    }

    #[test]
    fn no_detections_misses_everything_not_ignored() {
        let gts = [gt(0.0, false), gt(50.0, true), gt(100.0, false)];
        assert_eq!(match_detections(&[], &gts, 0.5, 0.0).unwrap(), MatchCounts { tp: 0, fp: 0, fn_: 2 });
    }

    #[test]
    fn duplicate_on_one_target() {
        // second box overlaps [0,10] on [4,14]: IoU 6/14 < 0.5, so use [2,12]: 8/12
        let gts = [gt(0.0, false)];
        let dets = [det(0.0, 10.0, 0.9), det(2.0, 10.0, 0.8)];
        assert_eq!(match_detections(&dets, &gts, 0.5, 0.0).unwrap(), MatchCounts { tp: 1, fp: 1, fn_: 0 });
    }

    #[test]
    fn higher_score_claims_target_first() {
        let gts = [gt(0.0, false)];
        let dets = [det(2.0, 10.0, 0.4), det(0.0, 10.0, 0.9)];
        let (outcomes, _) = assign_detections(&dets, &gts, 0.5).unwrap();
        assert_eq!(outcomes, vec![(1, MatchOutcome::TruePositive), (0, MatchOutcome::FalsePositive)]);
    }

    #[test]
    fn ignored_overlap_is_neutral() {
        let gts = [gt(0.0, true)];
        let dets = [det(0.0, 10.0, 0.9), det(300.0, 10.0, 0.9)];
        assert_eq!(match_detections(&dets, &gts, 0.5, 0.0).unwrap(), MatchCounts { tp: 0, fp: 1, fn_: 0 });
    }

    #[test]
    fn score_threshold_discards_low_scores() {
        let gts = [gt(0.0, false)];
        let dets = [det(0.0, 10.0, 0.3), det(300.0, 10.0, 0.9)];
        assert_eq!(match_detections(&dets, &gts, 0.5, 0.5).unwrap(), MatchCounts { tp: 0, fp: 1, fn_: 1 });
    }

    #[test]
    fn rejects_bad_iou_threshold() {
        assert!(match_detections(&[], &[], 0.0, 0.0).is_err());
        assert!(match_detections(&[], &[], 1.5, 0.0).is_err());
        assert!(match_detections(&[], &[], 1.0, 0.0).is_ok());
    }
}
