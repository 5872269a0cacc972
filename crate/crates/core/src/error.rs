//! Error type shared across the crate.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, HpmError>;

#[derive(Debug, Error)]
pub enum HpmError {
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid manifest at {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },

    #[error("blob length mismatch in {file}: expected {expected} bytes, found {actual}")]
    BlobLength {
        file: String,
        expected: u64,
        actual: u64,
    },

    #[error("label out of range at row {row}: {label} >= k = {k}")]
    LabelOutOfRange { row: usize, label: u32, k: usize },

    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    #[error("empty bank")]
    EmptyBank,

    #[error("bank has fewer samples ({n}) than classes ({k})")]
    TooFewSamples { n: usize, k: usize },

    #[error("degenerate feature: near-zero norm{}", fmt_row(.row))]
    DegenerateFeature { row: Option<usize> },

    #[error("empty class {class}: no samples")]
    EmptyClass { class: usize },

    #[error("insufficient class support: class {class} has {count} sample(s), need at least 2")]
    InsufficientClassSupport { class: usize, count: usize },

    #[error("dimension mismatch in {what}: expected {expected}, found {actual}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        actual: usize,
    },

    #[error("factorization failed; increase ridge")]
    FactorizationFailed,

    #[error("invalid parameter {name}: {reason}")]
    InvalidParam { name: String, reason: String },

    #[error("empty score set: {what}")]
    EmptyScores { what: String },

    #[error("missing logits: {what}")]
    MissingLogits { what: String },

    #[error("score error at row {row}: {source}")]
    RowError {
        row: usize,
        #[source]
        source: Box<HpmError>,
    },
}

fn fmt_row(row: &Option<usize>) -> String {
    match row {
        Some(r) => format!(" at row {r}"),
        None => String::new(),
    }
}

impl HpmError {
    /// True for operating-system level failures (used by the CLI to pick
    /// exit code 2 instead of 1).
    pub fn is_io(&self) -> bool {
        match self {
            HpmError::Io { .. } => true,
            HpmError::RowError { source, .. } => source.is_io(),
            _ => false,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HpmError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        HpmError::InvalidParam {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}
