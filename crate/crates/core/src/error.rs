use thiserror::Error;

pub type Result<T> = std::result::Result<T, SdrError>;

#[derive(Debug, Error)]
pub enum SdrError {
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("covariance is singular: eigenvalue {eigenvalue:e} below rank tolerance {tolerance:e}")]
    SingularCovariance { eigenvalue: f64, tolerance: f64 },

    #[error("dimension {d} out of range 1..={p}")]
    DimensionOutOfRange { d: usize, p: usize },

    #[error("basis is rank deficient (smallest singular value {smallest:e})")]
    RankDeficientBasis { smallest: f64 },

    #[error("every sample point was trimmed by the density threshold")]
    AllPointsTrimmed,

    #[error("COZY vector vanished: |Gamma_yz| = {norm:e}")]
    ZeroCozy { norm: f64 },

    #[error("hypothesised dimension m = {m} leaves no degrees of freedom (p = {p}, k = {k})")]
    InvalidM { m: usize, p: usize, k: usize },

    #[error("bootstrap replicate {replicate} failed after {attempts} redraws: {reason}")]
    ResampleFailure {
        replicate: usize,
        attempts: usize,
        reason: String,
    },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("no complete rows remain after dropping missing values")]
    EmptyAfterNaDrop,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl SdrError {
    /// Stable machine-readable tag, used in the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            SdrError::InvalidData(_) => "InvalidData",
            SdrError::InvalidConfig(_) => "InvalidConfig",
            SdrError::SingularCovariance { .. } => "SingularCovariance",
            SdrError::DimensionOutOfRange { .. } => "DimensionOutOfRange",
            SdrError::RankDeficientBasis { .. } => "RankDeficientBasis",
            SdrError::AllPointsTrimmed => "AllPointsTrimmed",
            SdrError::ZeroCozy { .. } => "ZeroCozy",
            SdrError::InvalidM { .. } => "InvalidM",
            SdrError::ResampleFailure { .. } => "ResampleFailure",
            SdrError::Parse { .. } => "ParseError",
            SdrError::EmptyAfterNaDrop => "EmptyAfterNaDrop",
            SdrError::Io(_) => "Io",
        }
    }
}
