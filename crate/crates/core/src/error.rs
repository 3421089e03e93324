use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index ({i}, {j}, {k}) out of bounds for dims {dims:?}")]
    Index {
        i: usize,
        j: usize,
        k: usize,
        dims: [usize; 3],
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch} (objective {objective})")]
    Divergence { epoch: usize, objective: f64 },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Shape(_) => 2,
            Error::Divergence { .. } => 4,
            Error::Index { .. }
            | Error::Parse { .. }
            | Error::Data(_)
            | Error::Io { .. }
            | Error::Csv(_) => 3,
        }
    }
}
