//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by any fliplab operation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Filesystem or network I/O failure, with the path or URL involved.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A dataset or config file line that does not parse.
    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// A manifest whose contents disagree with the companion data file.
    #[error("integrity error for {name}: {message}")]
    Integrity { name: String, message: String },

    /// Input that violates an operation precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Configuration that fails schema validation.
    #[error("configuration error: {0}")]
    Config(String),

    /// A model request that failed after client-level retries.
    #[error("request {request_id} failed: {message}")]
    Request { request_id: String, message: String },

    /// A judge response with no parseable verdict label.
    #[error("judge response for {item_id} unparseable: {message}")]
    JudgeParse { item_id: String, message: String },

    /// Run-state transition attempted out of order.
    #[error("run state error: {0}")]
    State(String),

    /// Plan stages referencing manifests that do not exist.
    #[error("unresolved dataset references, missing manifests: {0:?}")]
    UnresolvedDatasets(Vec<String>),

    /// Vocabulary or merges file that fails to load.
    #[error("bpe load error in {path} at line {line}: {message}")]
    BpeLoad {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Text that cannot be encoded with the loaded vocabulary.
    #[error("bpe encode error: {0}")]
    BpeEncode(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
