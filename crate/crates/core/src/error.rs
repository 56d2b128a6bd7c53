use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("entry X[{row},{col}] = {value} lies outside [-1, 1]")]
    EntryOutOfRange { row: usize, col: usize, value: f64 },

    #[error("matrix is rank deficient: numerical rank {rank} < {cols}")]
    RankDeficient { rank: usize, cols: usize },

    #[error("shape error: {0}")]
    ShapeError(String),

    #[error("least-squares residual is zero; relative error is undefined")]
    ZeroResidual,

    #[error("invalid privacy budget {0}: epsilon must be positive and finite")]
    InvalidBudget(f64),

    #[error("projection dimension {n_prime} must be smaller than the number of rows {n}")]
    ProjectionTooLarge { n_prime: usize, n: usize },

    #[error("bound condition violated: {0}")]
    ConditionViolated(String),

    #[error("degenerate channel: total noise variance is zero")]
    DegenerateChannel,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate split: {train} training rows and {test} test rows for {d} features")]
    DegenerateSplit { train: usize, test: usize, d: usize },

    #[error("parse error at row {row}, column {col}: {msg}")]
    ParseError { row: usize, col: usize, msg: String },

    #[error("label error at row {row}: {msg}")]
    LabelError { row: usize, msg: String },

    #[error("i/o error: {0}")]
    IoError(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::IoError(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
