use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    IoPlain(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// One or more rows of an input file failed validation.
    #[error("{} malformed row(s): {}", .0.len(), format_rows(.0))]
    MalformedRows(Vec<RowError>),

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("unknown id `{0}`")]
    UnknownId(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("query is empty after analysis")]
    EmptyQuery,

    #[error("scorer `{scorer}` failed on query {query:?} / passage `{passage_id}`: {reason}")]
    Scorer {
        scorer: String,
        query: String,
        passage_id: String,
        reason: String,
    },

    #[error("encoder service error: {0}")]
    Service(String),

    #[error("cache miss for {operation} (key {key}) in replay mode")]
    CacheMiss { operation: String, key: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("unsupported format version {found} (expected {expected})")]
    UnknownVersion { found: u32, expected: u32 },

    #[error("lock held on {0}")]
    Locked(PathBuf),
}

/// Location of a rejected input row (1-based row index).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub row: usize,
    pub field: String,
    pub reason: String,
}

fn format_rows(rows: &[RowError]) -> String {
    rows.iter()
        .map(|r| format!("row {} field `{}`: {}", r.row, r.field, r.reason))
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
