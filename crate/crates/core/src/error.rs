use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("cannot allocate {what}: {bytes} bytes requested")]
    Allocation { what: String, bytes: usize },

    #[error("numerical failure at step {step}: {what}")]
    Numerical { step: usize, what: String },

    #[error("imaginary-time relaxation did not converge in {steps} steps (last energy {last_energy:.12} a.u., last change {residual:.3e})")]
    NoConvergence {
        steps: usize,
        last_energy: f64,
        residual: f64,
    },

    #[error("malformed snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Process exit code for the CLI: 2 for configuration problems
    /// (including grids too large to allocate), 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Domain(_) | Error::Allocation { .. } => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Domain(_) => "domain",
            Error::Allocation { .. } => "allocation",
            Error::Numerical { .. } => "numerical",
            Error::NoConvergence { .. } => "no-convergence",
            Error::Snapshot(_) => "snapshot",
            Error::Io(_) => "io",
        }
    }
}

/// Allocates a zero-filled vector, reporting the requested size instead of aborting.
pub fn try_zeroed<T: Clone + Default>(len: usize, what: &str) -> Result<Vec<T>> {
    let mut v = Vec::new();
    let bytes = len.saturating_mul(std::mem::size_of::<T>());
    v.try_reserve_exact(len).map_err(|_| Error::Allocation {
        what: what.to_string(),
        bytes,
    })?;
    v.resize(len, T::default());
    Ok(v)
}
