use std::path::PathBuf;

use thiserror::Error;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;
pub const EXIT_OTHER: u8 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error(transparent)]
    Core(#[from] ringfit::Error),

    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use ringfit::Error as E;
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Config { .. } => EXIT_IO,
            CliError::Core(e) => match e {
                E::Input(_) => EXIT_USAGE,
                E::Io { .. } | E::Parse { .. } | E::Serde(_) => EXIT_IO,
                E::Numerical(_) => EXIT_NUMERICAL,
                _ => EXIT_OTHER,
            },
            CliError::Other(_) => EXIT_OTHER,
        }
    }
}

pub fn io_error(path: impl Into<PathBuf>, e: std::io::Error) -> CliError {
    CliError::Core(ringfit::Error::Io {
        path: path.into(),
        source: e,
    })
}
