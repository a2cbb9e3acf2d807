use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid argument or malformed input data.
    #[error("invalid input: {0}")]
    Input(String),

    /// A dense materialization would exceed the configured entry limit.
    #[error("capacity exceeded: {requested} entries requested, limit is {limit}")]
    Capacity { requested: u128, limit: u128 },

    /// Operation called for the wrong data kind (continuous vs binary).
    #[error("operation `{op}` is not defined for {kind} data")]
    Mode {
        op: &'static str,
        kind: &'static str,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Non-finite values encountered during optimization or sampling.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
