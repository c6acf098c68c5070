use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

/// Axis-aligned box: top-left corner plus positive width and height, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::InvalidParameter { name: "box", reason: format!("corner ({x}, {y}) is not finite") });
        }
        if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
            return Err(Error::InvalidParameter { name: "box", reason: format!("extent {w}x{h} is not positive") });
        }
        Ok(Self { x, y, w, h })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn width(&self) -> f64 {
        self.w
    }

    pub fn height(&self) -> f64 {
        self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

/// Intersection over union.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let ih = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    (inter / (a.area() + b.area() - inter)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionBox {
    pub image_id: String,
    pub bbox: BBox,
    pub score: f64,
}

impl DetectionBox {
    pub fn new(image_id: impl Into<String>, bbox: BBox, score: f64) -> Result<Self> {
        if !score.is_finite() {
            return Err(Error::InvalidParameter { name: "score", reason: format!("{score} is not finite") });
        }
        Ok(Self { image_id: image_id.into(), bbox, score })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Occlusion {
    None,
    Partial,
    Heavy,
}

impl Occlusion {
    pub fn as_str(self) -> &'static str {
        match self {
            Occlusion::None => "none",
            Occlusion::Partial => "partial",
            Occlusion::Heavy => "heavy",
        }
    }
}

impl FromStr for Occlusion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Occlusion::None),
            "partial" => Ok(Occlusion::Partial),
            "heavy" => Ok(Occlusion::Heavy),
            other => Err(Error::InvalidParameter {
                name: "occlusion",
                reason: format!("`{other}` is not one of none, partial, heavy"),
            }),
        }
    }
}

impl fmt::Display for Occlusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Annotation classes. All four count as pedestrians.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Category {
    Person,
    People,
    /// `person?`: an uncertain person label.
    PersonUncertain,
    Cyclist,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Person => "person",
            Category::People => "people",
            Category::PersonUncertain => "person?",
            Category::Cyclist => "cyclist",
        }
    }

    pub fn is_positive(self) -> bool {
        true
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "person" => Ok(Category::Person),
            "people" => Ok(Category::People),
            "person?" => Ok(Category::PersonUncertain),
            "cyclist" => Ok(Category::Cyclist),
            other => Err(Error::InvalidParameter {
                name: "category",
                reason: format!("`{other}` is not one of person, people, person?, cyclist"),
            }),
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthBox {
    pub image_id: String,
    pub bbox: BBox,
    pub category: Category,
    pub occlusion: Occlusion,
    /// Ignored boxes neither earn nor cost anything during matching.
    pub ignore: bool,
}

impl GroundTruthBox {
    pub fn new(image_id: impl Into<String>, bbox: BBox, category: Category, occlusion: Occlusion) -> Self {
        Self { image_id: image_id.into(), bbox, category, occlusion, ignore: !category.is_positive() }
    }
}

/// Height and occlusion limits defining the evaluated ground-truth subset.
#[derive(Debug, Clone, PartialEq)]
pub struct ReasonableFilter {
    min_height_px: f64,
    allowed_occlusion: Vec<Occlusion>,
}

impl ReasonableFilter {
    pub const DEFAULT_MIN_HEIGHT: f64 = 55.0;

    pub fn new(min_height_px: f64, allowed_occlusion: Vec<Occlusion>) -> Result<Self> {
        if !(min_height_px > 0.0 && min_height_px.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "min_height",
                reason: format!("{min_height_px} must be positive"),
            });
        }
        Ok(Self { min_height_px, allowed_occlusion })
    }

    /// Default occlusion set (none, partial) with a custom height limit.
    pub fn with_min_height(min_height_px: f64) -> Result<Self> {
        Self::new(min_height_px, alloc::vec![Occlusion::None, Occlusion::Partial])
    }

    pub fn min_height_px(&self) -> f64 {
        self.min_height_px
    }

    pub fn allowed_occlusion(&self) -> &[Occlusion] {
        &self.allowed_occlusion
    }

    pub fn admits(&self, gt: &GroundTruthBox) -> bool {
        gt.bbox.height() >= self.min_height_px && self.allowed_occlusion.contains(&gt.occlusion)
    }
}

impl Default for ReasonableFilter {
    fn default() -> Self {
        Self::with_min_height(Self::DEFAULT_MIN_HEIGHT).expect("positive default")
    }
}

/// Marks boxes outside the filter as ignored. Nothing is removed and
/// already-ignored boxes stay ignored.
pub fn apply_reasonable_filter(gts: &[GroundTruthBox], filter: &ReasonableFilter) -> Vec<GroundTruthBox> {
    gts.iter().map(|g| GroundTruthBox { ignore: g.ignore || !filter.admits(g), ..g.clone() }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn iou_reference_cases() {
        let a = bb(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bb(5.0, 5.0, 1.0, 1.0)), 0.0);
        assert_eq!(iou(&a, &bb(2.0, 0.0, 2.0, 2.0)), 0.0);
        assert!((iou(&a, &bb(1.0, 0.0, 2.0, 2.0)) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_degenerate_boxes() {
        assert!(BBox::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(BBox::new(0.0, 0.0, 1.0, -2.0).is_err());
        assert!(BBox::new(f64::NAN, 0.0, 1.0, 1.0).is_err());
        assert!(DetectionBox::new("a", bb(0.0, 0.0, 1.0, 1.0), f64::INFINITY).is_err());
    }

    #[test]
    fn reasonable_filter_defaults() {
        let f = ReasonableFilter::default();
        let gt = |h: f64, occ| GroundTruthBox::new("i", bb(0.0, 0.0, 20.0, h), Category::Person, occ);
        let out = apply_reasonable_filter(
            &[
                gt(60.0, Occlusion::None),
                gt(54.9, Occlusion::None),
                gt(100.0, Occlusion::Heavy),
                gt(55.0, Occlusion::Partial),
            ],
            &f,
        );
        let flags: Vec<bool> = out.iter().map(|g| g.ignore).collect();
        assert_eq!(flags, [false, true, true, false]);
        assert_eq!(out.len(), 4);
    }

    #[test]
    fn filter_keeps_existing_ignores() {
        let mut g = GroundTruthBox::new("i", bb(0.0, 0.0, 20.0, 80.0), Category::Cyclist, Occlusion::None);
        g.ignore = true;
        assert!(apply_reasonable_filter(&[g], &ReasonableFilter::default())[0].ignore);
    }

    #[test]
    fn labels_round_trip_through_strings() {
        for c in [Category::Person, Category::People, Category::PersonUncertain, Category::Cyclist] {
            assert_eq!(c.as_str().parse::<Category>().unwrap(), c);
            assert!(c.is_positive());
        }
        for o in [Occlusion::None, Occlusion::Partial, Occlusion::Heavy] {
            assert_eq!(o.as_str().parse::<Occlusion>().unwrap(), o);
        }
        assert!("car".parse::<Category>().is_err());
        assert!("full".parse::<Occlusion>().is_err());
    }
}
