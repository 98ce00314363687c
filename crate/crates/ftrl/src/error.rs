use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] ftrl_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// Invalid or missing setting; `field` is `section.key`.
    #[error("config {field}: {message}")]
    Config { field: String, message: String },

    #[error("pretraining with seed {seed} failed: {source}")]
    Pretrain {
        seed: u64,
        #[source]
        source: ftrl_core::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("network: {0}")]
    Net(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
