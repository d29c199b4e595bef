use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("requested {requested} cross-section modes but only {available} are resolved")]
    Capacity { requested: usize, available: usize },

    #[error("Neumann compatibility violated: integral {integral:.3e} against L1 norm {l1:.3e}")]
    Compatibility { integral: f64, l1: f64 },

    #[error("normal flux {flux:.3e} through the cross-section boundary")]
    BoundaryFlux { flux: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("time step {dt:.3e} exceeds the stability limit {limit:.3e}")]
    Cfl { dt: f64, limit: f64 },

    #[error("Klein-Gordon mass term {mass:.3e} is not positive")]
    Regime { mass: f64 },

    #[error("forcing under-resolved: sample spacing {spacing:.3e} > {limit:.3e}")]
    Sampling { spacing: f64, limit: f64 },

    #[error("density floor violated at t = {t:.6}: min density {min_density:.3e}")]
    Positivity { t: f64, min_density: f64 },

    #[error("numerical instability at t = {t:.6}: {diagnostic}")]
    Instability { t: f64, diagnostic: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Positivity { .. }
            | Error::Instability { .. }
            | Error::Regime { .. }
            | Error::Fit(_) => 3,
            _ => 2,
        }
    }
}
