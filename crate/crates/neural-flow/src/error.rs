//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Structural mismatch: dimensions, channel kinds, segment counts.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A numeric precondition was violated (invertibility window, dt > 0, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Segment durations are not integer multiples of the requested step.
    #[error("alignment error: {0}")]
    Alignment(String),

    /// The reference integrator produced non-finite values.
    #[error("divergence: non-finite state while integrating segment {segment}")]
    Divergence { segment: usize },

    /// A network forward pass produced non-finite values.
    #[error("numeric error: non-finite intermediate at layer {layer}")]
    NonFinite { layer: usize },

    /// Training loss became non-finite.
    #[error("training diverged at iteration {iteration}")]
    TrainingDiverged { iteration: usize },

    /// Malformed or mismatched model/data document.
    #[error("format error: {0}")]
    Format(String),

    /// Unknown document version.
    #[error("unsupported format version {found} (this build reads version {supported})")]
    Version { found: u64, supported: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
