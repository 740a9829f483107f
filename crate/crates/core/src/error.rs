use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A gradient or loss turned NaN/Inf during training.
    #[error("non-finite value at iteration {iteration} in `{name}`")]
    NonFinite { iteration: u64, name: String },

    #[error("solver diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },

    #[error("format error in {path:?}: {kind}")]
    Format { path: PathBuf, kind: FormatError },

    #[error("i/o error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Distinct container/graymap decoding failures.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("not a container (bad magic)")]
    BadMagic,
    #[error("malformed header line {line}: {reason}")]
    BadHeader { line: usize, reason: String },
    #[error("payload length mismatch: header implies {expected} bytes, found {found}")]
    PayloadLength { expected: usize, found: usize },
    #[error("duplicate tensor name `{0}`")]
    DuplicateName(String),
    #[error("no tensor named `{0}`")]
    MissingTensor(String),
    #[error("tensor `{name}` has element type {found}, expected {expected}")]
    ElementType {
        name: String,
        expected: &'static str,
        found: &'static str,
    },
    #[error("missing metadata key `{0}`")]
    MissingMeta(String),
    #[error("bad metadata value for `{key}`: {reason}")]
    BadMeta { key: String, reason: String },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, kind: FormatError) -> Self {
        Error::Format {
            path: path.into(),
            kind,
        }
    }
}
