use std::path::PathBuf;

use crate::group::GroupId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("group mismatch: {0}")]
    GroupMismatch(String),

    #[error("matrix is not an element of {0:?}")]
    InvalidMatrix(GroupId),

    #[error("index ({s}, {i}, {j}) out of range")]
    IndexOutOfRange { s: usize, i: usize, j: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("pooling domain is empty")]
    EmptyDomain,

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: {msg}")]
    Range { line: usize, msg: String },

    #[error("dataset size mismatch: expected {expected} items, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u64, expected: u64 },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub(crate) fn mismatch(expected: GroupId, found: GroupId) -> Self {
        Error::GroupMismatch(format!("expected {expected:?}, found {found:?}"))
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
