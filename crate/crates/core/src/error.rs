use std::path::PathBuf;

use thiserror::Error;

use crate::llm::Stage;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("document is empty after whitespace normalization")]
    EmptyDocument,

    #[error("invalid chunking policy: {0}")]
    InvalidPolicy(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unreadable file {path}: {reason}")]
    UnreadableFile { path: PathBuf, reason: String },

    #[error("no documents found under {0}")]
    NoDocuments(PathBuf),

    #[error("duplicate document id `{0}`")]
    DuplicateDocument(String),

    #[error("chunk `{chunk_id}` has source {found} but collection `{collection}` is {expected}")]
    SourceMismatch {
        chunk_id: String,
        collection: String,
        expected: String,
        found: String,
    },

    #[error("duplicate chunk id `{0}`")]
    DuplicateChunk(String),

    #[error("{context}: {message}")]
    Schema { context: String, message: String },

    #[error("unsupported schema version {found} in {context} (expected {expected})")]
    SchemaVersion {
        context: String,
        found: u32,
        expected: u32,
    },

    #[error("embedding dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index for collection `{0}` is empty")]
    EmptyIndex(String),

    #[error("unknown chunk id `{0}`")]
    UnknownChunk(String),

    #[error("method {0} appears more than once in fusion input")]
    DuplicateMethod(String),

    #[error("provider error at stage {stage}: {message}")]
    Provider { stage: Stage, message: String },

    #[error("embedding provider error: {0}")]
    Embedding(String),

    #[error("environment variable `{0}` holding the provider credential is not set")]
    MissingCredential(String),

    #[error("missing template placeholders: {}", .0.join(", "))]
    MissingPlaceholders(Vec<String>),

    #[error("few-shot mode requires an exemplar file (set prompting.exemplars in the config)")]
    MissingExemplars,

    #[error("could not determine a CORRECT/INCORRECT label from model output")]
    LabelUnparseable,

    #[error("prediction and gold id sets differ: {0}")]
    IdMismatch(String),

    #[error("duplicate record id `{0}`")]
    DuplicateRecord(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("knowledge base already exists at {0} (pass --force to rebuild)")]
    KbExists(PathBuf),

    #[error("knowledge base not found at {0} (run `bluemed build-kb` first)")]
    KbMissing(PathBuf),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            context: context.into(),
            message: message.into(),
        }
    }
}
