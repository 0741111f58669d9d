use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("projection did not converge after {iterations} iterations (residual {residual:.3e})")]
    ProjectionFailed { iterations: usize, residual: f64 },
    #[error("quadrature did not reach tolerance: estimate {error:.3e} > {tol:.3e}")]
    Quadrature { error: f64, tol: f64 },
    #[error("acceptance check failed: {0}")]
    Acceptance(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid(_) | Error::GridMismatch(_) | Error::Config(_) => 2,
            Error::Numerical(_) | Error::ProjectionFailed { .. } | Error::Quadrature { .. } => 3,
            Error::Acceptance(_) => 4,
            Error::Io(_) | Error::Json(_) => 2,
        }
    }
}

pub(crate) fn check_velocity(v: [f64; 3]) -> Result<()> {
    let s = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    if !s.is_finite() || s >= 1.0 {
        return Err(Error::invalid(format!("|v| must be < 1, got {:.6}", s.sqrt())));
    }
    Ok(())
}
