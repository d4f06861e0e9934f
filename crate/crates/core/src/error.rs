use num_complex::Complex64;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("chain length {length} exceeds the maximum of {max}")]
    DimensionOverflow { length: usize, max: usize },

    #[error("site {site} out of range for chain of length {length}")]
    SiteOutOfRange { site: usize, length: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("matrix is not square or has non-finite entries")]
    BadMatrix,

    #[error("eigensolver failed to converge at z = {z}")]
    NoConvergence { z: Complex64 },

    #[error("need at least {needed} eigenvalues, got {got}")]
    TooFewEigenvalues { needed: usize, got: usize },

    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("ambiguous eigenvalue matching")]
    AmbiguousMatching,

    #[error("tracking exceeded maximum recursion depth on phi in [{phi_start}, {phi_end}]")]
    MaxDepthExceeded { phi_start: f64, phi_end: f64 },

    /// The loop's permutation parity disagrees with its discriminant
    /// winding, which is impossible for a correctly labelled trace.
    #[error("inconsistent braid: {transpositions} transpositions but winding {winding}")]
    ParityMismatch { transpositions: usize, winding: i64 },

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("not a permutation: {0}")]
    NotAPermutation(String),

    #[error("cell straddles the real axis: Im z in [{im0}, {im1}]")]
    StraddlesRealAxis { im0: f64, im1: f64 },

    #[error("matrix is not hermitian (defect {defect:e})")]
    NotHermitian { defect: f64 },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}
