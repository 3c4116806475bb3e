use thiserror::Error;

/// Errors raised by problem validation, simulation and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in `{field}`: expected {expected}, found {found}")]
    DimensionMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite entry in `{field}` at row {row}, column {col}")]
    NonFinite {
        field: &'static str,
        row: usize,
        col: usize,
    },

    #[error("invalid column labels: {0}")]
    InvalidLabels(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate network: {0}")]
    DegenerateNetwork(String),

    #[error("simulation diverged at step {step}")]
    Divergence { step: usize },

    #[error("SNR undefined: noiseless signal has zero norm")]
    UndefinedSnr,

    #[error("dictionary cannot represent the ground truth: {0}")]
    UnrepresentableTruth(String),

    #[error("normal matrix could not be factorized even after ridge regularization")]
    RegularizationFailure,

    #[error("model matrix sigma^2 I + A Gamma A^T is singular")]
    SingularModel,

    #[error("zero curvature with nonzero weight at column {0}")]
    DegenerateCurvature(usize),

    #[error("undefined metric: {0}")]
    UndefinedMetric(&'static str),

    #[error("block {block}: {source}")]
    Block {
        block: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
