use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the pipeline.
///
/// Variants are grouped by the exit code the CLI maps them to: input and
/// configuration problems, numerical failures, and I/O failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no triangles")]
    NoTriangles,
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("triangle {triangle} references vertex {index} but mesh has {vertices} vertices")]
    IndexOutOfRange {
        triangle: usize,
        index: usize,
        vertices: usize,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("zero variance predictor: {0}")]
    ZeroVariance(String),
    #[error("singular design")]
    SingularDesign,
    #[error("underdetermined: {rows} rows for {cols} columns")]
    Underdetermined { rows: usize, cols: usize },
    #[error("exact leverage point at observation {0}")]
    ExactLeverage(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite statistic at vertex {0}")]
    NonFiniteStatistic(usize),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

/// Broad failure class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::SingularDesign
            | Error::Underdetermined { .. }
            | Error::ExactLeverage(_)
            | Error::NonFiniteStatistic(_) => ErrorKind::Numerical,
            Error::Io(_) => ErrorKind::Io,
            Error::Csv(e) if e.is_io_error() => ErrorKind::Io,
            _ => ErrorKind::Validation,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            ErrorKind::Validation => 2,
            ErrorKind::Numerical => 3,
            ErrorKind::Io => 4,
        }
    }
}
