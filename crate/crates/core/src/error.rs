use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("schedule: {0}")]
    Schedule(String),

    #[error("quadrature did not converge on [{a:e}, {b:e}] (estimated error {err:e})")]
    Quadrature { a: f64, b: f64, err: f64 },

    #[error("ODE integration failed: {0}")]
    Ode(#[from] ode_solvers::dop_shared::IntegrationError),

    #[error("under-resolved grid: {0}")]
    UnderResolved(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("norm drift {drift:e} exceeds budget {budget:e}")]
    NormDrift { drift: f64, budget: f64 },

    #[error("{what}: residual {residual:e} exceeds threshold {threshold:e}")]
    Residual {
        what: &'static str,
        residual: f64,
        threshold: f64,
    },

    #[error("pulse is not unitary: |d0|^2 + |d1|^2 = {0}")]
    NonUnitary(f64),

    #[error("zero-norm input: {0}")]
    ZeroNorm(&'static str),

    #[error("resource limit: {0}")]
    ResourceLimit(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of a numerical procedure on otherwise valid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Quadrature { .. }
                | Error::Ode(_)
                | Error::UnderResolved(_)
                | Error::NormDrift { .. }
                | Error::Residual { .. }
        )
    }
}

pub(crate) fn ensure_finite(value: f64, what: &'static str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite(what))
    }
}
