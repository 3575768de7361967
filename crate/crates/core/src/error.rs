use thiserror::Error;

/// Errors produced by the simulator and the experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("quadrature grid failed its orthonormality check: residual {residual:.3e} > {tolerance:.1e}")]
    GridResidual { residual: f64, tolerance: f64 },

    #[error("Gauss-Hermite node solver did not converge for root {index} of {order}")]
    NodeSolver { index: usize, order: usize },

    #[error("grid too small: need at least {needed} modes, grid has {available}")]
    GridTooSmall { needed: usize, available: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("implicit midpoint did not converge at t = {t}: residual {residual:.3e}")]
    MidpointDivergence { t: f64, residual: f64 },

    #[error("step failed at t = {t}: {source}")]
    StepFailure {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("effective sample size {ess:.1} is below the floor {floor}")]
    EssFloor { ess: f64, floor: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
