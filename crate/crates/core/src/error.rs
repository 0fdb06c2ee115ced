use thiserror::Error;

/// Errors raised by the solver, the filters and the analysis routines.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("right-hand side evaluation failed at t = {t}: non-finite value for state {y:?}")]
    EvaluationFailure { t: f64, y: Vec<f64> },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual_norm:e})")]
    NoConvergence {
        iterations: usize,
        residual_norm: f64,
        last_iterate: Vec<f64>,
    },

    #[error("singular Jacobian in Newton solve")]
    SingularJacobian,

    #[error("step from t = {t} with k = {k} failed: {source}")]
    StepFailure {
        t: f64,
        k: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate filter parameter nu = {nu}: the value {excluded} is excluded")]
    DegenerateNu { nu: f64, excluded: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported query: {0}")]
    UnsupportedQuery(String),

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("invalid parameter for problem `{problem}`: {reason}")]
    BadParameter { problem: String, reason: String },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn at_step(self, t: f64, k: f64) -> Self {
        Error::StepFailure {
            t,
            k,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
