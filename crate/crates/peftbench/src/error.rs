use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("config: {0}")]
    ConfigStructure(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {msg}")]
    Report { path: PathBuf, msg: String },

    #[error("run {label} seed {seed}: {source}")]
    Run {
        label: String,
        seed: u64,
        #[source]
        source: peftkit::Error,
    },

    #[error(transparent)]
    Core(#[from] peftkit::Error),
}

impl BenchError {
    pub(crate) fn config(line: usize, msg: impl Into<String>) -> Self {
        BenchError::Config {
            line,
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;
