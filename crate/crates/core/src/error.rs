use thiserror::Error;

/// Failure categories surfaced by the library.
///
/// The variants fall into three families that the CLI maps onto distinct
/// exit codes: input/data problems, numerical failures and usage errors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("tied values under error-on-ties policy{}: indices {indices:?}", row_label(.row))]
    Ties { row: Option<usize>, indices: Vec<usize> },

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("degenerate design: all rows identical")]
    DegenerateDesign,

    #[error("degenerate score function: {0}")]
    DegenerateScore(String),

    #[error("invalid score function: {0}")]
    InvalidScore(String),

    #[error("degenerate covariates: residual score variance {v00_1:e} below threshold (v00 = {v00:e})")]
    DegenerateCovariate { v00_1: f64, v00: f64 },

    #[error("quadrature did not converge: {what} (achieved error estimate {achieved:e})")]
    Quadrature { what: String, achieved: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("exact enumeration refused: n = {n} exceeds the bound {bound}")]
    ExactTooLarge { n: usize, bound: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column '{column}': {msg}")]
    Parse { row: usize, column: String, msg: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("i/o error: {0}")]
    Io(String),
}

fn row_label(row: &Option<usize>) -> String {
    match row {
        Some(r) => format!(" in rank row {r}"),
        None => String::new(),
    }
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numeric,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Quadrature { .. } | Error::Numeric(_) => ErrorClass::Numeric,
            Error::InvalidArgument(_) | Error::ExactTooLarge { .. } => ErrorClass::Usage,
            _ => ErrorClass::Data,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
