use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("scene overconstrained: could not place object {object} after {attempts} attempts")]
    SceneOverconstrained { object: usize, attempts: usize },

    #[error("empty scene")]
    EmptyScene,

    #[error("degenerate cluster")]
    DegenerateCluster,

    #[error("row-count mismatch: primary has {primary} rows, auxiliary has {auxiliary}")]
    RowMismatch { primary: usize, auxiliary: usize },

    #[error("numerical overflow{}", match .step { Some(s) => format!(" at step {s}"), None => String::new() })]
    NumericalOverflow { step: Option<usize> },

    #[error("tape does not match parameters: {0}")]
    TapeMismatch(String),

    #[error("checkpoint config hash mismatch: expected {expected}, found {found}")]
    ConfigHashMismatch { expected: String, found: String },

    #[error("{dir} holds a run with a different configuration (resume hash {found}, expected {expected})")]
    ResumeMismatch {
        dir: PathBuf,
        expected: String,
        found: String,
    },

    #[error("corrupt checkpoint {path}: {reason}")]
    CorruptCheckpoint { path: PathBuf, reason: String },

    #[error("malformed record in {path} line {line}: {source}")]
    Record {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
