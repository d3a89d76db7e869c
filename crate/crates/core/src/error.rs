use std::io;

use thiserror::Error;

/// Errors produced by the spikecode library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("malformed PGM: {0}")]
    MalformedPgm(String),

    #[error("unsupported image: {0}")]
    UnsupportedImage(String),

    #[error("png decode: {0}")]
    PngDecode(#[from] png::DecodingError),

    #[error("png encode: {0}")]
    PngEncode(#[from] png::EncodingError),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("input range mismatch: expected [{expected_lo}, {expected_hi}], got [{lo}, {hi}]")]
    RangeMismatch {
        expected_lo: f64,
        expected_hi: f64,
        lo: f64,
        hi: f64,
    },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("non-finite weights in layer {layer}")]
    NonFiniteWeights { layer: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParam(msg.into())
    }

    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
