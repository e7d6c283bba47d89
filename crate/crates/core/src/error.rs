use std::path::PathBuf;

use thiserror::Error;

use crate::io::FormatError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mode index {0}, expected 1, 2 or 3")]
    InvalidMode(usize),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric: |S[{row},{col}] - S[{col},{row}]| = {diff:e}")]
    NotSymmetric { row: usize, col: usize, diff: f64 },

    #[error("rank {rank} out of bounds for mode {mode} of size {size}")]
    RankOutOfBounds { mode: usize, rank: usize, size: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular spectrum sums to zero")]
    ZeroSpectrum,

    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest: {0}")]
    Manifest(String),
}
