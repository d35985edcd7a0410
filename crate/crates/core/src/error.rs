use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which artifact an integrity failure was detected in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegrityKind {
    Annotation,
    Feature,
    Checkpoint,
    Vocabulary,
}

impl IntegrityKind {
    pub fn category(self) -> &'static str {
        match self {
            IntegrityKind::Annotation => "annotation-integrity",
            IntegrityKind::Feature => "feature-integrity",
            IntegrityKind::Checkpoint => "checkpoint-integrity",
            IntegrityKind::Vocabulary => "vocabulary-integrity",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("index error: {index} out of range for extent {extent}")]
    Index { index: usize, extent: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("missing feature: {0}")]
    MissingFeature(String),

    #[error("{}: {message}", kind.category())]
    Integrity { kind: IntegrityKind, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn integrity(kind: IntegrityKind, message: impl Into<String>) -> Self {
        Error::Integrity {
            kind,
            message: message.into(),
        }
    }

    pub fn dim(message: impl Into<String>) -> Self {
        Error::Dimension(message.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-parsable category, used by the CLI for its one-line error report.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Index { .. } => "index",
            Error::Numeric(_) => "numeric",
            Error::Domain(_) => "domain",
            Error::MissingFeature(_) => "missing-feature",
            Error::Integrity { kind, .. } => kind.category(),
            Error::Parse(_) => "parse",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }
}
