use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rejection sampling stalled: acceptance {acceptance:.3e} after {attempts} attempts")]
    SamplingStalled { acceptance: f64, attempts: u64 },

    #[error("quadrature did not converge: error estimate {error:.3e} above tolerance {tolerance:.3e}")]
    QuadratureNotConverged { error: f64, tolerance: f64 },

    #[error("density vanishes inside the integration support at {0}")]
    ZeroDensity(String),

    #[error("fixed point not reached after {iterations} iterations (last change {last_change:.3e})")]
    NotConverged { iterations: usize, last_change: f64 },

    #[error("Monte Carlo error {stderr:.3e} at node {node} exceeds half the tolerance {tolerance:.3e}")]
    SampleBudget { node: usize, stderr: f64, tolerance: f64 },

    #[error("negative density {value:.3e} at velocity node {node} (step {step})")]
    NegativeDensity { node: usize, value: f64, step: usize },

    #[error("event time regression: {next} < {current}\n{dump}")]
    TimeRegression { current: f64, next: f64, dump: String },

    #[error("fit rejected: {0}")]
    Fit(String),

    #[error("entry {entry} (N = {n}): {source}")]
    Entry {
        entry: usize,
        n: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("{module}: {source}")]
    Module {
        module: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn in_module(self, module: &'static str) -> Self {
        Error::Module {
            module,
            source: Box::new(self),
        }
    }
}
