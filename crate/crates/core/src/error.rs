use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported datatype: {0}")]
    UnsupportedDatatype(String),

    #[error("dimension mismatch: expected {expected} values, found {found}")]
    DataLength { expected: usize, found: usize },

    #[error("dims mismatch: {0:?} vs {1:?}")]
    DimsMismatch([usize; 3], [usize; 3]),

    #[error("volume is not a binary mask")]
    NotBinary,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("skeleton: {0}")]
    Skeleton(String),

    #[error("centerline: {0}")]
    Centerline(String),

    #[error("reconstruct: {0}")]
    Reconstruct(String),

    #[error("mesh: {0}")]
    Mesh(String),

    #[error("boolean union: {0}")]
    Boolean(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("loss diverged at iteration {iteration}: total {value:.6e} exceeds 10x initial {initial:.6e}")]
    Diverged {
        iteration: usize,
        value: f64,
        initial: f64,
    },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
