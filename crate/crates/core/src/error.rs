use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("value out of range at pixel {index}: {value}")]
    OutOfRange { index: usize, value: f64 },
    #[error("negative input at pixel {index}: {value}")]
    NegativeInput { index: usize, value: f64 },
    #[error("non-finite value at pixel {index}")]
    NonFinite { index: usize },
    #[error("bad blur radius {0}: must be odd and >= 3")]
    BadRadius(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("degenerate target: {0}")]
    DegenerateTarget(String),
    #[error("dilation rate {rate} too large for {height}x{width} feature map")]
    RateTooLarge {
        rate: usize,
        height: usize,
        width: usize,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("missing pair for sample id {0}")]
    MissingPair(String),
    #[error("dimension mismatch for sample id {id}: image {image_dims:?}, label {label_dims:?}")]
    DimensionMismatch {
        id: String,
        image_dims: (usize, usize),
        label_dims: (usize, usize),
    },
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
