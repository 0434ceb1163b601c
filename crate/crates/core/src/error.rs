use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{op}: matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite {
        op: &'static str,
        index: usize,
        pivot: f64,
    },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("vertex index {index} out of range for p = {p}")]
    IndexOutOfRange { index: usize, p: usize },
    #[error("invalid edge {from} -> {to}: parents must carry a larger index than children")]
    InvalidEdge { from: usize, to: usize },
    #[error("improper DAG-Wishart prior at vertex {vertex}: alpha - nu = {gap} must exceed 2")]
    ImproperPrior { vertex: usize, gap: f64 },
    #[error("Cholesky factor has entry ({row}, {col}) outside the DAG support")]
    SupportViolation { row: usize, col: usize },
    #[error("invalid fold count {folds} for {n} observations")]
    InvalidFolds { folds: usize, n: usize },
    #[error("ensemble is empty")]
    EmptyEnsemble,
    #[error("no threshold on the grid yields a positive definite estimate")]
    NoValidThreshold,
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error("matrix is not symmetric: |a[{row}][{col}] - a[{col}][{row}]| = {gap}")]
    NotSymmetric { row: usize, col: usize, gap: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// True for failures that come from the numerics rather than from bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::ImproperPrior { .. }
                | Error::NoValidThreshold
                | Error::EmptyEnsemble
        )
    }
}
