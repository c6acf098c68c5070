//! Plain-text file formats: ground-truth annotations, detections, fusion
//! parameters and exported Miss Rate–FPPI curves.
//!
//! Every parser reports the origin and line of the first problem and never
//! returns a partial result.

mod annotations;
mod curve;
mod params;

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use annotations::{
    parse_annotations, parse_annotations_str, parse_detections, parse_detections_str, AnnotationSet, DetectionSet,
};
pub use curve::{export_curve, format_curve, format_decimal, parse_curve_str};
pub use params::{
    format_params, load_params, parse_params_str, save_params, BN_EPSILON_FIELD, PARAMS_MAGIC, PARAMS_VERSION,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{}: {cause}", path.display())]
    Io { path: PathBuf, cause: std::io::Error },
    #[error("{origin}:{line}: {message}")]
    Syntax { origin: String, line: usize, message: String },
    #[error("{origin}:{line}: missing array `{name}`")]
    MissingField { origin: String, line: usize, name: String },
    #[error("{origin}:{line}: `{name}` is declared {dims} ({declared} values) but has {found}")]
    ShapeMismatch { origin: String, line: usize, name: String, dims: String, declared: usize, found: usize },
    #[error("{origin}:{line}: unsupported parameter file version `{found}`")]
    UnknownVersion { origin: String, line: usize, found: String },
    #[error("{origin}:{line}: {cause}")]
    Invalid { origin: String, line: usize, cause: mspd_core::Error },
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

pub(crate) fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|cause| DataError::Io { path: path.to_path_buf(), cause })
}

pub(crate) fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|cause| DataError::Io { path: path.to_path_buf(), cause })
}

/// Non-empty lines with `#` comments stripped, numbered from 1.
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((i + 1, line))
    })
}

pub(crate) fn parse_f64(origin: &str, line: usize, what: &str, field: &str) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(DataError::Syntax {
            origin: origin.into(),
            line,
            message: format!("{what} `{field}` is not a finite number"),
        }),
    }
}
