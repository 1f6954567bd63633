use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent user input.
    #[error("input error: {0}")]
    Input(String),
    /// A numerical routine failed (non-PD matrix, NaN, ...).
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("mode search did not converge after {sweeps} sweeps (scaled gradient {gradient:.3e})")]
    NoConvergence { sweeps: usize, gradient: f64 },
    #[error("quadrature did not reach tolerance (estimate {estimate:e}, error {error:e})")]
    Quadrature { estimate: f64, error: f64 },
    #[error("prior mass p(z*) = {0:e} is too small for a Savage-Dickey estimate")]
    PriorMassTooSmall(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Process exit code: 2 for input problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Input(_) | Error::Io(_) | Error::Json(_) => 2,
            Error::PriorMassTooSmall(_) => 2,
            Error::Numeric(_) | Error::NoConvergence { .. } | Error::Quadrature { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
