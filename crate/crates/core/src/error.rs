use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("nonlinearity evaluated to a non-finite value at s = {point}")]
    Evaluation { point: f64 },

    #[error("quadrature on [{a}, {b}] did not reach tolerance (estimate {estimate:e}, error {error:e})")]
    QuadratureTolerance {
        a: f64,
        b: f64,
        estimate: f64,
        error: f64,
    },

    #[error("non-finite integrand in element {element}")]
    Overflow { element: usize },

    #[error("unsupported domain `{0}`")]
    UnsupportedDomain(String),

    #[error("level mismatch: {0}")]
    LevelMismatch(String),

    #[error("degenerate space: {0}")]
    DegenerateSpace(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("Jacobian is singular")]
    SingularJacobian,

    #[error("no convergence after {iterations} iterations (best residual {best_residual:e})")]
    NonConvergence {
        iterations: usize,
        best_residual: f64,
        best_iterate: Vec<f64>,
        history: Vec<f64>,
    },

    #[error("lambda = {lambda} is not below the certified threshold lambda* = {lambda_star}")]
    Regime { lambda: f64, lambda_star: f64 },

    #[error("continuation stagnated: differences {0:?} did not decrease over three stages")]
    Stagnation(Vec<f64>),

    #[error("degenerate minimizer: energy {energy:e} is not below -{tol:e}; try a finer level or larger lambda")]
    DegenerateMinimizer { energy: f64, tol: f64 },

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Bad configuration or a parameter outside the certified regime, as
    /// opposed to a numerical failure.
    pub fn is_rejection(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::Parse(_)
                | Error::Regime { .. }
                | Error::Hypothesis(_)
                | Error::UnsupportedDomain(_)
                | Error::Json(_)
        )
    }

    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }
}
