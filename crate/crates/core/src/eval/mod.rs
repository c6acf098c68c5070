//! Detection evaluation: IoU matching against ground truth with ignore
//! regions, the Miss Rate–FPPI curve, and the log-average miss rate.

mod boxes;
mod curve;
mod matching;

pub use boxes::{
    apply_reasonable_filter, iou, BBox, Category, DetectionBox, GroundTruthBox, Occlusion, ReasonableFilter,
};
pub use curve::{
    fppi_samples, group_by_image, log_average_mr, miss_rate_fppi_curve, CurvePoint, EvalImage, MissRateCurve,
    FPPI_SAMPLE_COUNT, MISS_RATE_FLOOR,
};
pub use matching::{assign_detections, match_detections, MatchCounts, MatchOutcome, DEFAULT_IOU_THRESHOLD};
