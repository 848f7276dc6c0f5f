use thiserror::Error;

/// Errors raised by the simulator, diagnostics and harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    /// A value left the domain an operation is defined on (for example a
    /// non-positive nutrient concentration handed to the sensitivity).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("positivity violation in {field}: minimum {min:e}")]
    Positivity { field: &'static str, min: f64 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    Solver {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("incompatible Neumann right-hand side: integral {integral:e} exceeds tolerance")]
    Gauge { integral: f64 },

    #[error("time step underflow: dt = {dt:e}")]
    Stiffness { dt: f64 },

    #[error("diagnostic failure: {0}")]
    Diagnostic(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("quadrature error: {0}")]
    Quadrature(String),

    #[error("oracle error: {0}")]
    Oracle(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors raised while advancing the PDE (as opposed to
    /// configuration or I/O problems).
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::Positivity { .. }
                | Error::Invariant(_)
                | Error::Solver { .. }
                | Error::Gauge { .. }
                | Error::Stiffness { .. }
        )
    }
}
