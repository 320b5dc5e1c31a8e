use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("matrix {what} is not square ({rows}x{cols})")]
    NotSquare {
        what: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("forcing queried at t = {t} outside sampled range [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("step {step} failed at t = {t}: {reason}")]
    StepFailure { step: usize, t: f64, reason: String },

    #[error(
        "fourth-order compensation requires gamma = 1/2 and beta = 1/6 exactly, got gamma = {gamma}, beta = {beta}"
    )]
    CompensationMismatch { gamma: f64, beta: f64 },

    #[error("{path}:{line}: {msg}")]
    MatrixMarket {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("scenario config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
