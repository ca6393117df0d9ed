//! Error types shared across the crate.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by tensor operations, parameter validation, and the
/// network pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An axis of an input does not have the extent the operation requires.
    #[error("{op}: axis {axis} expected extent {expected}, got {got}")]
    AxisMismatch {
        op: &'static str,
        axis: &'static str,
        expected: usize,
        got: usize,
    },

    /// An input has the wrong rank.
    #[error("{op}: expected rank {expected}, got shape {got:?}")]
    RankMismatch {
        op: &'static str,
        expected: usize,
        got: Vec<usize>,
    },

    /// A data buffer does not match the element count implied by its shape.
    #[error("shape {shape:?} implies {expected} elements, got {got}")]
    ElementCount {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },

    /// An operation received an empty input it cannot handle.
    #[error("{0}: input is empty")]
    EmptyInput(&'static str),

    /// A parameter value is outside its admissible range.
    #[error("{op}: invalid parameter: {what}")]
    InvalidParam { op: &'static str, what: String },

    /// A named tensor required to assemble the network is missing.
    #[error("missing tensor {name:?}")]
    MissingTensor { name: String },

    /// The weight container holds a tensor the architecture does not use.
    #[error("unexpected tensor {name:?} in weight container")]
    UnexpectedTensor { name: String },

    /// A named tensor has the wrong shape for its slot.
    #[error("tensor {name:?}: expected shape {expected:?}, got {got:?}")]
    TensorShape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    /// Wraps a failure with the pipeline stage it occurred in.
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    /// Weights file serialization/deserialization failure.
    #[error(transparent)]
    Weights(#[from] WeightsError),

    /// Image file decoding failure.
    #[error(transparent)]
    Image(#[from] ImageError),

    /// Run configuration file failure.
    #[error("config: {0}")]
    Config(String),

    /// Underlying I/O failure.
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Tags an error with the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

/// Distinct failure kinds for the binary weights file format.
#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("bad magic {found:?}, expected \"SSNW\"")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported weights file version {found}")]
    UnsupportedVersion { found: u32 },

    #[error("truncated file while reading {context}")]
    TruncatedHeader { context: &'static str },

    #[error("truncated payload for tensor {name:?}")]
    TruncatedTensor { name: String },

    #[error("tensor name is not valid UTF-8")]
    InvalidName,

    #[error("tensor {name:?}: dimension of zero is not allowed")]
    ZeroDim { name: String },

    #[error("{extra} trailing bytes after final tensor")]
    TrailingBytes { extra: usize },

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// PGM/PPM decoding failures. Every variant carries the byte offset at
/// which decoding stopped.
#[derive(Debug, Error)]
pub enum ImageError {
    #[error("byte {offset}: bad magic, expected \"P5\" or \"P6\"")]
    BadMagic { offset: usize },

    #[error("byte {offset}: expected {expected}")]
    Malformed { offset: usize, expected: &'static str },

    #[error("byte {offset}: maxval must be 255, got {got}")]
    BadMaxval { offset: usize, got: u32 },

    #[error("byte {offset}: payload truncated, expected {expected} bytes, got {got}")]
    ShortPayload {
        offset: usize,
        expected: usize,
        got: usize,
    },

    #[error("byte {offset}: dimensions must be >= 1")]
    BadDimensions { offset: usize },

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}
