use alloc::string::String;

/// Errors raised by the core computations.
///
/// Every variant corresponds to a violated precondition; none of the
/// operations fail for numerical reasons once their inputs validate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch, expected {expected}, found {found}")]
    ShapeMismatch { op: &'static str, expected: String, found: String },

    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{op}: missing required input `{what}`")]
    MissingInput { op: &'static str, what: &'static str },

    #[error("evaluation rejected: {0}")]
    Evaluation(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn shape_mismatch(
    op: &'static str,
    expected: impl core::fmt::Display,
    found: impl core::fmt::Display,
) -> Error {
    use alloc::string::ToString;
    Error::ShapeMismatch { op, expected: expected.to_string(), found: found.to_string() }
}
