use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not square: {0}x{1}")]
    NotSquare(usize, usize),

    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("trace is not 1 (got {0})")]
    NotUnitTrace(f64),

    #[error("matrix is not positive (min eigenvalue {0:e})")]
    NotPositive(f64),

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("rank {k} out of range for dimension {dim}")]
    BadRank { k: usize, dim: usize },

    #[error("invalid spectrum: {0}")]
    BadSpectrum(String),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("invalid distribution: {0}")]
    BadDistribution(String),

    #[error("KL divergence is infinite (support of p not contained in support of q)")]
    KlInfinite,

    #[error("bad arguments: {0}")]
    BadArguments(String),

    #[error("invalid collection: {0}")]
    InvalidCollection(String),

    #[error("pairwise and average forms of the mean squared HS distance disagree: {pairwise} vs {average}")]
    FormMismatch { pairwise: f64, average: f64 },

    #[error("operator too large: dimension {dim} exceeds limit {limit}")]
    TooLarge { dim: usize, limit: usize },

    #[error("table size guard: {0} copies exceeds the supported maximum")]
    Overflow(usize),

    #[error("TN statistic needs at least 2 boxes (got {0})")]
    TooFewBoxes(usize),

    #[error("operator needs more copies than available")]
    TooFewCopies,

    #[error("truncation tail {0:e} is looser than the 1e-10 requirement")]
    TruncationTooLoose(f64),

    #[error("invalid covariance kind: {0}")]
    BadKind(String),

    #[error("Poissonization mean {0} is below the supported minimum of 1")]
    MuTooSmall(f64),

    #[error("hard instances need even dimension (got {0})")]
    OddDimension(usize),

    #[error("epsilon {0} too large: need 8*epsilon <= 1")]
    EpsilonTooLarge(f64),

    #[error("collection is not a member of the hard-instance family")]
    WrongFamily,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
