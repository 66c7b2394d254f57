//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty segment list")]
    EmptySegments,

    #[error("empty sequence: no unmasked steps")]
    EmptySequence,

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("unsupported container format version {found} (supported: {supported})")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("truncated payload in {file}: need {needed} bytes, have {available}")]
    TruncatedPayload {
        file: String,
        needed: u64,
        available: u64,
    },

    #[error("manifest is internally inconsistent: {0}")]
    ManifestInvalid(String),

    #[error("dataset does not validate: {0}")]
    InvalidDataset(String),

    #[error("no label set for task `{task}` in dataset `{dataset}`")]
    MissingLabelSet { task: String, dataset: String },

    #[error("duplicate label set (task `{task}`, provenance {provenance})")]
    DuplicateLabelSet { task: String, provenance: String },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("run aborted: {0}")]
    AbortedRun(String),

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("unknown preset `{name}`; available: {available}")]
    UnknownPreset { name: String, available: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn dims(context: impl Into<String>, expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
