use std::path::Path;

use mspd_core::eval::{BBox, Category, DetectionBox, GroundTruthBox, Occlusion};

use super::{content_lines, parse_f64, read, DataError, Result};

/// Ground truth grouped by image, images in order of first appearance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnnotationSet {
    pub images: Vec<(String, Vec<GroundTruthBox>)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionSet {
    pub images: Vec<(String, Vec<DetectionBox>)>,
}

impl AnnotationSet {
    pub fn boxes(&self) -> impl Iterator<Item = &GroundTruthBox> {
        self.images.iter().flat_map(|(_, b)| b)
    }

    pub fn len(&self) -> usize {
        self.boxes().count()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

impl DetectionSet {
    pub fn boxes(&self) -> impl Iterator<Item = &DetectionBox> {
        self.images.iter().flat_map(|(_, b)| b)
    }

    pub fn len(&self) -> usize {
        self.boxes().count()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

fn push<T>(images: &mut Vec<(String, Vec<T>)>, id: &str, item: T) {
    match images.iter_mut().find(|(i, _)| i == id) {
        Some((_, v)) => v.push(item),
        None => images.push((id.to_string(), vec![item])),
    }
}

fn fields<'a>(origin: &str, line: usize, text: &'a str, layout: &str) -> Result<Vec<&'a str>> {
    let f: Vec<&str> = text.split_whitespace().collect();
    let want = layout.split_whitespace().count();
    if f.len() != want {
        return Err(DataError::Syntax {
            origin: origin.into(),
            line,
            message: format!("expected {want} fields `{layout}`, found {}", f.len()),
        });
    }
    Ok(f)
}

fn bbox(origin: &str, line: usize, f: &[&str]) -> Result<BBox> {
    let x = parse_f64(origin, line, "x", f[0])?;
    let y = parse_f64(origin, line, "y", f[1])?;
    let w = parse_f64(origin, line, "width", f[2])?;
    let h = parse_f64(origin, line, "height", f[3])?;
    BBox::new(x, y, w, h).map_err(|cause| DataError::Invalid { origin: origin.into(), line, cause })
}

/// Parses `image_id category x y w h occlusion` lines.
pub fn parse_annotations_str(text: &str, origin: &str) -> Result<AnnotationSet> {
    const LAYOUT: &str = "image_id category x y w h occlusion";
    let mut set = AnnotationSet::default();
    for (line, content) in content_lines(text) {
        let f = fields(origin, line, content, LAYOUT)?;
        let invalid = |cause| DataError::Invalid { origin: origin.into(), line, cause };
        let category: Category = f[1].parse().map_err(invalid)?;
        let bbox = bbox(origin, line, &f[2..6])?;
        let occlusion: Occlusion = f[6].parse().map_err(invalid)?;
        push(&mut set.images, f[0], GroundTruthBox::new(f[0], bbox, category, occlusion));
    }
    Ok(set)
}

/// Parses `image_id x y w h score` lines.
pub fn parse_detections_str(text: &str, origin: &str) -> Result<DetectionSet> {
    const LAYOUT: &str = "image_id x y w h score";
    let mut set = DetectionSet::default();
    for (line, content) in content_lines(text) {
        let f = fields(origin, line, content, LAYOUT)?;
        let bbox = bbox(origin, line, &f[1..5])?;
        let score = parse_f64(origin, line, "score", f[5])?;
        let det = DetectionBox::new(f[0], bbox, score).map_err(|cause| DataError::Invalid {
            origin: origin.into(),
            line,
            cause,
        })?;
        push(&mut set.images, f[0], det);
    }
    Ok(set)
}

pub fn parse_annotations(path: &Path) -> Result<AnnotationSet> {
    parse_annotations_str(&read(path)?, &path.display().to_string())
}

pub fn parse_detections(path: &Path) -> Result<DetectionSet> {
    parse_detections_str(&read(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn walkthrough_lines() {
        let a = parse_annotations_str("img1 person 10 20 30 60 none\n", "a").unwrap();
        let g = a.boxes().next().unwrap();
        assert_eq!((g.bbox.x(), g.bbox.y(), g.bbox.width(), g.bbox.height()), (10.0, 20.0, 30.0, 60.0));
        assert_eq!((g.category, g.occlusion), (Category::Person, Occlusion::None));

        let d = parse_detections_str("img1 10 20 30 60 0.87", "d").unwrap();
        assert_eq!(d.boxes().next().unwrap().score, 0.87);
    }

    #[test]
    fn empty_and_comment_only_files() {
        assert!(parse_annotations_str("", "a").unwrap().is_empty());
        assert!(parse_detections_str("# nothing\n\n   \n", "d").unwrap().is_empty());
    }

    #[test]
    fn grouping_keeps_first_appearance_order() {
        let text = "b person 0 0 1 1 none\na cyclist 0 0 1 1 heavy # trailing\nb people 0 0 2 2 partial\n";
        let a = parse_annotations_str(text, "a").unwrap();
        let ids: Vec<_> = a.images.iter().map(|(id, b)| (id.as_str(), b.len())).collect();
        assert_eq!(ids, [("b", 2), ("a", 1)]);
        assert_eq!(a.len(), 3);
    }

    #[test]
    fn diagnostics_carry_line_numbers() {
        let err = parse_annotations_str("# header\nimg1 person 10 20 0 60 none\n", "ann.txt").unwrap_err();
        assert!(err.to_string().starts_with("ann.txt:2:"), "{err}");
        let err = parse_detections_str("img1 1 2 3 4 0.5\nimg1 1 2 3 4 high\n", "det.txt").unwrap_err();
        assert!(err.to_string().starts_with("det.txt:2:") && err.to_string().contains("score"), "{err}");
        let err = parse_annotations_str("img1 person 1 2 3 4\n", "a").unwrap_err();
        assert!(err.to_string().contains("expected 7 fields"), "{err}");
        assert!(parse_annotations_str("img1 dog 1 2 3 4 none\n", "a").is_err());
        assert!(parse_annotations_str("img1 person 1 2 3 4 mostly\n", "a").is_err());
        assert!(parse_detections_str("img1 1 2 3 4 inf\n", "d").is_err());
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = parse_annotations(Path::new("/nonexistent/ann.txt")).unwrap_err();
        assert!(matches!(err, DataError::Io { .. }));
        assert!(err.to_string().contains("/nonexistent/ann.txt"));
    }
}
