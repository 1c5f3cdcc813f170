use std::path::{Path, PathBuf};

use csipred_autograd::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },
    #[error("input error: {0}")]
    Input(String),
    #[error("corrupt file {}: {msg}", path.display())]
    Corrupt { path: PathBuf, msg: String },
    #[error("unsupported format in {}: {msg}", path.display())]
    Unsupported { path: PathBuf, msg: String },
    #[error("degenerate diffusion step: {0}")]
    DegenerateStep(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("metric error: {0}")]
    Metric(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("estimator error: {0}")]
    Estimator(String),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Input(_) | Error::Corrupt { .. } | Error::Unsupported { .. } | Error::Io { .. } => 3,
            _ => 4,
        }
    }
}
