use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("derivative of order {order} not available for problem `{problem}`")]
    DerivativeOrder { order: usize, problem: String },
    #[error("proximal step did not converge after {iterations} iterations (residual {residual:e})")]
    NewtonDivergence { iterations: usize, residual: f64 },
    #[error("singular linear system: {0}")]
    Singular(String),
    #[error("step {index} failed: {source}")]
    StepFailed {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("no admissible samples: {0}")]
    NoSamples(String),
    #[error("block structure violated: {0}")]
    Structure(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("too few zero crossings ({0}) to fit a frequency")]
    TooFewCrossings(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
