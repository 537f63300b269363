use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter fell outside the range where the operation is defined.
    #[error("{name} = {value} violates the requirement {requirement}")]
    Domain {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },

    #[error("invalid initial data: {0}")]
    InitialData(String),

    #[error("CFL violated at {face}: dt = {dt:e} exceeds the stable bound {bound:e}")]
    Cfl { face: String, dt: f64, bound: f64 },

    #[error("{system} solve did not converge in {iterations} iterations (relative residual {residual:e})")]
    SolverDiverged {
        system: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("discrete divergence {0:e} exceeds the projection tolerance")]
    Divergence(f64),

    #[error("{0} violated: {1}")]
    Invariant(&'static str, String),

    #[error("functional `{0}` is not finite")]
    NonFinite(&'static str),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("snapshot error: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(name: &'static str, value: f64, requirement: &'static str) -> Self {
        Error::Domain {
            name,
            value,
            requirement,
        }
    }

    /// True for failures of the numerics (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Cfl { .. }
                | Error::SolverDiverged { .. }
                | Error::Divergence(_)
                | Error::Invariant(..)
                | Error::NonFinite(_)
        )
    }
}
