//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by tensor ops, model construction, file formats and the
/// training pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor extents do not satisfy an operation's contract.
    #[error("shape error: {0}")]
    Shape(String),

    /// A scalar argument is outside its allowed range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// An API contract was violated (e.g. non-scalar loss passed to backward).
    #[error("contract error: {0}")]
    Contract(String),

    /// A model configuration is internally inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// A 2D checkpoint entry could not be mapped onto the 3D model.
    #[error("migration error: cannot map checkpoint entry `{name}`: {reason}")]
    Migration { name: String, reason: String },

    /// A checkpoint failed validation against the model it was loaded into.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// A serialized container (VOX1/NTC1) is malformed.
    #[error("format error: {0}")]
    Format(String),

    /// Case ingestion failed (unreadable slices, too few consistent slices).
    #[error("ingest error: {0}")]
    Ingest(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
