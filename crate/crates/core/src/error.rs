use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: {msg}")]
    InvalidShape { op: &'static str, msg: String },

    #[error("{op}: index {index} out of range for bound {bound}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("{op}: non-finite value encountered")]
    NonFinite { op: &'static str },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("operands were recorded on different tapes")]
    TapeMismatch,

    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    #[error("image slot mismatch: sequence declares {declared} slot rows, {supplied} supplied")]
    SlotMismatch { declared: usize, supplied: usize },

    #[error("image of {got_h}x{got_w} does not match expected {want}x{want}")]
    ImageSize {
        got_h: usize,
        got_w: usize,
        want: usize,
    },

    #[error("protocol: {0}")]
    Protocol(String),

    #[error("sequence {index} has length {len}, exceeding pack length {limit}")]
    OversizedSequence {
        index: usize,
        len: usize,
        limit: usize,
    },

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("checkpoint tensor {name}: shape {found:?} does not match expected {expected:?}")]
    CheckpointShape {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },

    #[error("checkpoint payload truncated: expected {expected} bytes, found {found}")]
    CheckpointTruncated { expected: u64, found: u64 },

    #[error("checkpoint tensor {name}: checksum mismatch")]
    CheckpointChecksum { name: String },

    #[error("checkpoint: {0}")]
    CheckpointFormat(String),

    #[error("non-finite loss at stage {stage} step {step} (batch records {records:?})")]
    NonFiniteLoss {
        stage: String,
        step: usize,
        records: Vec<u64>,
    },

    #[error("missing prerequisite: {0}")]
    Precondition(String),

    #[error("memory budget of {budget} bytes is below the fixed overhead of {fixed} bytes")]
    InfeasibleBudget { budget: u64, fixed: u64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization: {0}")]
    Serde(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidShape {
            op,
            msg: msg.into(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
