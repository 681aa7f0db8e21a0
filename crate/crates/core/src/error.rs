use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("attention over an all-masked sequence")]
    EmptyAttention,

    #[error("mask is not a prefix pattern (real positions must precede padding)")]
    NonPrefixMask,

    #[error("variable does not belong to this tape")]
    NotOnTape,

    #[error("gradient requested for a non-scalar output of shape {0:?}")]
    NonScalarOutput((usize, usize)),

    #[error("conversation {conv_id} has {turns} turns but capacity is N*M = {capacity}")]
    Capacity {
        conv_id: String,
        turns: usize,
        capacity: usize,
    },

    #[error("conversation {0} has no turns")]
    EmptyConversation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("duplicate conversation id {0}")]
    DuplicateId(String),

    #[error("unknown conversation id {0}")]
    UnknownId(String),

    #[error("groups overlap: {0}")]
    OverlappingGroups(String),

    #[error("empty pair set")]
    EmptyPairs,

    #[error("input vector is constant")]
    ConstantInput,

    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },

    #[error("unsupported checkpoint format version {0}")]
    Version(u32),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("linear algebra: {0}")]
    Linalg(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::Shape { op, left, right }
    }
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::EmptyAttention => "empty_attention",
            Error::NonPrefixMask => "non_prefix_mask",
            Error::NotOnTape => "not_on_tape",
            Error::NonScalarOutput(_) => "non_scalar_output",
            Error::Capacity { .. } => "capacity",
            Error::EmptyConversation(_) => "empty_conversation",
            Error::Config(_) => "config",
            Error::Parse { .. } => "parse",
            Error::DuplicateId(_) => "duplicate_id",
            Error::UnknownId(_) => "unknown_id",
            Error::OverlappingGroups(_) => "overlapping_groups",
            Error::EmptyPairs => "empty_pairs",
            Error::ConstantInput => "constant_input",
            Error::TooFewSamples { .. } => "too_few_samples",
            Error::Version(_) => "version",
            Error::Checkpoint(_) => "checkpoint",
            Error::Linalg(_) => "linalg",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}
