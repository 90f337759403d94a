//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("particle count mismatch: {left} vs {right}")]
    CountMismatch { left: usize, right: usize },

    #[error("exact assignment limited to {max} particles, got {got}")]
    TooLarge { max: usize, got: usize },

    #[error("operation requires uniform weights")]
    NonUniformWeights,

    #[error("weights of paired measures differ at index {index}")]
    WeightMismatch { index: usize },

    #[error("unsupported operator: {0}")]
    UnsupportedOperator(String),

    #[error("operator domain has empty interior: {0}")]
    DegenerateDomain(String),

    #[error("non-finite state at particle {particle}, step {step}")]
    NonFinite { particle: usize, step: usize },

    #[error("time grids do not match: {0}")]
    GridMismatch(String),

    #[error("regression design is rank deficient: {0}")]
    RegressionRankDeficient(String),

    #[error("driver is measure dependent but no frozen law flow was supplied")]
    MissingLawFlow,

    #[error("Picard iteration diverged after {iters} iterations (residual {residual})")]
    PicardDiverged { iters: usize, residual: f64 },

    #[error("tree depth {depth} exceeds the enumerable maximum {max}")]
    DepthTooLarge { depth: usize, max: usize },

    #[error("finite difference grid too coarse: doubling gap {gap} exceeds {tol}")]
    GridTooCoarse { gap: f64, tol: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Machine-readable error code used in the JSON error reports of the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::CountMismatch { .. } => "CountMismatch",
            Error::TooLarge { .. } => "TooLarge",
            Error::NonUniformWeights => "NonUniformWeights",
            Error::WeightMismatch { .. } => "WeightMismatch",
            Error::UnsupportedOperator(_) => "UnsupportedOperator",
            Error::DegenerateDomain(_) => "DegenerateDomain",
            Error::NonFinite { .. } => "NonFinite",
            Error::GridMismatch(_) => "GridMismatch",
            Error::RegressionRankDeficient(_) => "RegressionRankDeficient",
            Error::MissingLawFlow => "MissingLawFlow",
            Error::PicardDiverged { .. } => "PicardDiverged",
            Error::DepthTooLarge { .. } => "DepthTooLarge",
            Error::GridTooCoarse { .. } => "GridTooCoarse",
            Error::Config(_) => "Config",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Io(_) => "Io",
        }
    }

    /// Process exit status for the CLI: 2 for validation problems, 3 for
    /// numerical failures.
    pub fn exit_status(&self) -> i32 {
        match self {
            Error::NonFinite { .. }
            | Error::PicardDiverged { .. }
            | Error::RegressionRankDeficient(_)
            | Error::GridTooCoarse { .. } => 3,
            _ => 2,
        }
    }
}
