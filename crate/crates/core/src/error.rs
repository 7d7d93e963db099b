//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The input produced no analyzable windows (empty, or shorter than the
    /// minimum the windowing rule admits).
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// Not enough distinct data to satisfy a request (e.g. fewer distinct
    /// local features than requested codewords).
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A labeled operation was handed a single-class or unlabeled corpus.
    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    /// Vector dimensions disagree with what the model or config expects.
    #[error("shape mismatch: {0}")]
    ShapeError(String),

    /// A persisted document declares a format version this build cannot read.
    #[error("unsupported format version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    /// A persisted document or CSV row failed to parse.
    #[error("parse error: {0}")]
    ParseError(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
