use thiserror::Error;

use crate::data::StratumLabel;

/// Errors produced anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(String),

    #[error("malformed input at row {row}: {message}")]
    MalformedRow { row: usize, message: String },

    #[error("invalid header: {0}")]
    Header(String),

    #[error("duplicate subject_id {0:?}")]
    DuplicateSubject(String),

    #[error("subject {0:?}: both periods assign the same treatment")]
    SameTreatment(String),

    #[error("subject {subject:?} has a missing stratum variable; apply a completer filter first")]
    MissingStratumVariable { subject: String },

    #[error("subject {subject:?} has a missing outcome; apply a completer filter first")]
    MissingOutcome { subject: String },

    #[error("singular design: column {column:?} is linearly dependent on earlier columns")]
    SingularDesign { column: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate response: {0}")]
    DegenerateResponse(String),

    #[error("logistic fit did not converge: {0}")]
    NotConverged(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("stratum {stratum} is inestimable: {reason}")]
    Inestimable { stratum: StratumLabel, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("bootstrap failed: {0}")]
    Bootstrap(String),

    #[error("unknown column {0:?}")]
    UnknownColumn(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let row = e.position().map(|p| p.line() as usize);
        match row {
            Some(row) => Error::MalformedRow { row, message: e.to_string() },
            None => Error::Io(e.to_string()),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
