use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter space: {0}")]
    InvalidSpace(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("time step {dt} s violates the explicit stability bound; maximum admissible step is {max_dt} s")]
    Unstable { dt: f64, max_dt: f64 },

    #[error("slab position {position} mm outside (0, {max}] mm")]
    SlabOutOfBounds { position: f64, max: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("missing input column `{0}`")]
    MissingColumn(String),

    #[error("training diverged at epoch {epoch}; last finite epoch was {last_finite_epoch}")]
    Diverged { epoch: usize, last_finite_epoch: usize },

    #[error("insufficient rows: {0}")]
    InsufficientRows(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("checkpoint {path} at byte offset {offset}: {message}")]
    Checkpoint {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

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
}
