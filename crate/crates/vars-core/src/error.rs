//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, VarsError>;

#[derive(Debug, Error)]
pub enum VarsError {
    /// Operand shapes are incompatible for the named operation.
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: String, detail: String },

    /// An operation produced a non-finite value.
    #[error("non-finite value produced by {op}")]
    NumericOverflow { op: String },

    /// A caller violated an API contract (bad argument, wrong call order).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Configuration failed validation. The message lists every offending
    /// key so callers can fix a file in one pass.
    #[error("invalid config: {0}")]
    Config(String),

    /// Malformed input data (CSV, manifest, checkpoint bytes).
    #[error("format error in {source_name}: {detail}")]
    Format { source_name: String, detail: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl VarsError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        VarsError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(source_name: impl Into<String>, detail: impl Into<String>) -> Self {
        VarsError::Format {
            source_name: source_name.into(),
            detail: detail.into(),
        }
    }
}
