use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QifError {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid model specification: {0}")]
    InvalidModel(String),
    #[error("dimension too small: {structure} needs q >= {min}, got {q}")]
    DimensionTooSmall {
        structure: &'static str,
        min: usize,
        q: usize,
    },
    #[error("subgroup {0} has no subjects")]
    EmptySubgroup(usize),
    #[error("subject {subject} matches {matches} subgroups; subgroups must partition the covariate space")]
    NotAPartition { subject: usize, matches: usize },
    #[error("invalid subgroup definition: {0}")]
    InvalidSubgroup(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("weight matrix rank {rank} is below the parameter dimension {p}")]
    SingularWeightMatrix { rank: usize, p: usize },
    #[error("score jacobian is rank deficient")]
    RankDeficient,
    #[error("no convergence after {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("division by zero: {0}")]
    DivisionByZero(String),
    #[error("too many failed replications: {failed} of {total}")]
    TooManyFailures { failed: usize, total: usize },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("subject {0} does not form a balanced panel")]
    UnbalancedSubject(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("column {0} has zero variance")]
    ZeroVariance(usize),
    #[error("invalid split size {size} for {n} subjects")]
    InvalidSize { size: usize, n: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for QifError {
    fn from(e: std::io::Error) -> Self {
        QifError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, QifError>;
