use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("validation error{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Validation { line: Option<usize>, msg: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("id {global_id} is outside a vocabulary of {total} ids")]
    OutOfVocabulary { global_id: u64, total: u64 },

    #[error("vocabulary mismatch: expected hash {expected}, found {found}")]
    VocabularyMismatch { expected: String, found: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at step {step}: {msg}")]
    Diverged { step: usize, msg: String },

    #[error("degenerate fit: {0}")]
    DegenerateFit(&'static str),

    #[error("search bound exceeded: {0}")]
    BoundExceeded(String),

    #[error("buffer is empty")]
    EmptyBuffer,

    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable one-word category used for machine-readable reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "invalid-config",
            Error::Parse { .. } => "parse",
            Error::Validation { .. } => "validation",
            Error::Empty(_) => "empty-input",
            Error::LengthMismatch { .. } => "length-mismatch",
            Error::OutOfVocabulary { .. } => "out-of-vocabulary",
            Error::VocabularyMismatch { .. } => "vocabulary-mismatch",
            Error::NonFinite(_) => "non-finite",
            Error::Diverged { .. } => "diverged",
            Error::DegenerateFit(_) => "degenerate-fit",
            Error::BoundExceeded(_) => "bound-exceeded",
            Error::EmptyBuffer => "empty-buffer",
            Error::MissingArtifact(_) => "missing-artifact",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn validation(line: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Validation {
            line,
            msg: msg.into(),
        }
    }
}
