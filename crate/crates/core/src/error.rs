use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid pattern: {0}")]
    InvalidPattern(String),

    #[error("expected {expected} pattern, found {found}")]
    KindMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("update order is not a permutation of 0..{0}")]
    InvalidPermutation(usize),

    #[error("pattern overlap matrix is singular: pattern {pattern} is linearly dependent on patterns {depends_on:?}")]
    SingularOverlap {
        pattern: usize,
        depends_on: Vec<usize>,
    },

    #[error("non-finite weight at ({row}, {col})")]
    NonFiniteWeight { row: usize, col: usize },

    #[error("cannot normalise an all-zero vector")]
    ZeroVector,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: requested {requested}, available {available}")]
    InsufficientData { requested: usize, available: usize },

    #[error("bad IDX magic number {found}, expected {expected}")]
    BadMagic { expected: u32, found: u32 },

    #[error("truncated IDX file: needed {needed} bytes, got {got}")]
    Truncated { needed: usize, got: usize },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("image is {height}x{width}, need at least {min}x{min}")]
    ImageTooSmall {
        height: usize,
        width: usize,
        min: usize,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
