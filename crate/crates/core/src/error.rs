use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HyfiError>;

#[derive(Debug, Error)]
pub enum HyfiError {
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("failed to read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("node id out of range: hyperedge {hyperedge} references node {node} but there are {num_nodes} nodes")]
    NodeOutOfRange {
        hyperedge: usize,
        node: usize,
        num_nodes: usize,
    },

    #[error("duplicate node {node} in hyperedge {hyperedge}")]
    DuplicateMember { hyperedge: usize, node: usize },

    #[error("empty hyperedge {hyperedge}")]
    EmptyHyperedge { hyperedge: usize },

    #[error("row count mismatch: {what} has {found} rows, expected {expected}")]
    RowCountMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{what} id {id} out of range (size {size})")]
    IdOutOfRange { what: &'static str, id: usize, size: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite values in {0}")]
    NonFinite(String),

    #[error("zero-norm embedding row {row} in {what}; cosine similarity is undefined")]
    ZeroNorm { what: &'static str, row: usize },

    #[error("corrupt overlap matrix: element {element} has zero self-count but {neighbors} neighbours")]
    CorruptOverlap { element: usize, neighbors: usize },

    #[error("checkpoint {}: {message}", path.display())]
    Checkpoint { path: PathBuf, message: String },

    #[error("training diverged at epoch {epoch}: {source}")]
    Diverged {
        epoch: usize,
        #[source]
        source: Box<HyfiError>,
    },
}

impl HyfiError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            HyfiError::MissingFile(path)
        } else {
            HyfiError::Io { path, source }
        }
    }
}
