use thiserror::Error;

/// Errors raised across model construction, fitting and testing.
#[derive(Debug, Error)]
pub enum QmedError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("probability {0} outside (0, 1)")]
    ProbabilityOutOfRange(f64),

    #[error("value {value} outside the support of the {family} family")]
    OutOfSupport { family: &'static str, value: f64 },

    #[error("row {row}: {margin} value lies outside the fitted marginal support")]
    RowOutOfSupport { row: usize, margin: &'static str },

    #[error("correlation matrix is not positive definite (degenerate DAG parameters)")]
    SingularCorrelation,

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("{what} did not converge after {iterations} iterations (gradient norm {gradient_norm:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        gradient_norm: f64,
    },

    #[error("bootstrap spread of {0} is zero")]
    DegenerateBootstrap(&'static str),

    #[error("too many failed bootstrap replicates: {failed} of {total}")]
    TooManyFailures { failed: usize, total: usize },

    #[error("malformed data at row {row}, column {column}: {message}")]
    Data {
        row: usize,
        column: String,
        message: String,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, QmedError>;
