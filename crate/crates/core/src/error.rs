use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite sample at index {index}")]
    NonFinite { index: usize },

    #[error("invalid dimensions {height}x{width}")]
    InvalidDimensions { height: usize, width: usize },

    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("sample count {got} does not match {height}x{width}")]
    SampleCount {
        height: usize,
        width: usize,
        got: usize,
    },

    #[error("pixel pitch is required but missing")]
    MissingPitch,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("value {value} at index {index} lies outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },

    #[error("malformed header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("truncated payload in {path}: expected {expected} bytes, found {found}")]
    TruncatedPayload {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("unsupported image variant in {path}: {variant}")]
    UnsupportedVariant { path: PathBuf, variant: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),

    #[error("power-law fit failed: {0}")]
    FitFailed(String),

    #[error("filter produced imaginary residue {residue:e} (relative), above tolerance")]
    ImaginaryResidue { residue: f64 },

    #[error("degenerate population: {0}")]
    Degenerate(&'static str),

    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("non-finite activation in layer {layer}")]
    NonFiniteActivation { layer: usize },

    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("checkpoint checksum mismatch")]
    Checksum,

    #[error("checkpoint is corrupt: {0}")]
    CorruptCheckpoint(String),

    #[error("network configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("corpus too small: {0}")]
    CorpusTooSmall(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
