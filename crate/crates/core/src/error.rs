use thiserror::Error;

/// Errors raised by the analytic routines, the simulator and the CLI layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("fixed point did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { residual: f64, iterations: usize },

    #[error("density evaluation failed at grid index {index} (x = {x}): {source}")]
    GridConvergence {
        index: usize,
        x: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid measure: {0}")]
    Measure(String),

    #[error("invalid model spec: {0}")]
    Spec(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("theory error: {0}")]
    Theory(String),

    #[error("degenerate outlier: Z(1/theta) vanishes at theta = {theta}")]
    DegenerateOutlier { theta: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the fixed-point solvers, possibly wrapped with a grid index.
    pub fn is_convergence(&self) -> bool {
        matches!(self, Error::Convergence { .. } | Error::GridConvergence { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
