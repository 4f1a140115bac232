use std::io;
use std::path::PathBuf;

use crate::object::ObjectId;

#[derive(Debug, thiserror::Error)]
pub enum ObjectError {
    #[error("malformed object: {0}")]
    Malformed(String),

    #[error("invalid object id: {0}")]
    BadId(String),

    #[error("unknown object kind: {0}")]
    UnknownKind(String),

    #[error("project name must not be empty")]
    EmptyProjectName,
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("corrupt object {id} at {path}: {reason}")]
    CorruptObject { id: String, path: PathBuf, reason: String },

    #[error("unreadable repository {path}: {reason}")]
    UnreadableRepo { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("invalid corpus manifest: {0}")]
    Manifest(String),

    #[error("project {project}: {source}")]
    Project {
        project: String,
        #[source]
        source: Box<IngestError>,
    },
}

impl IngestError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HistoryError {
    #[error("tree {0} is not in the object store")]
    UnresolvedTree(ObjectId),

    #[error("commit {0} is not in the object store")]
    MissingCommit(ObjectId),

    #[error("object {id}: {source}")]
    Object {
        id: ObjectId,
        #[source]
        source: ObjectError,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("blob {0} has no creating commit")]
    NoCreatingCommit(ObjectId),

    #[error("index format version {found} is not supported (expected {expected})")]
    FormatVersionMismatch { found: u32, expected: u32 },

    #[error("{file}:{line}: {reason}")]
    BadRecord { file: String, line: usize, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl IndexError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("line {line}: {reason}")]
    BadRecord { line: usize, reason: String },

    #[error("line {line}: duplicate blob {id}")]
    DuplicateBlob { id: ObjectId, line: usize },

    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Errors loading keyword lists, license taxonomies and license manifests.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{0}")]
    Invalid(String),

    #[error("line {line}: {reason}")]
    BadLine { line: usize, reason: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}
