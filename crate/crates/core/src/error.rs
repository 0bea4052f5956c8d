use thiserror::Error;

/// Errors produced anywhere in the stencil toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("stencil of radius {radius} needs at least {} grid points, grid has {n}", 2 * radius + 1)]
    StencilTooWide { radius: usize, n: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("singular linear system: {0}")]
    Singular(&'static str),

    #[error("non-finite value encountered in {context} at iteration {iteration}")]
    NonFinite {
        context: &'static str,
        iteration: usize,
    },

    #[error("active-set solver exceeded {limit} working-set changes without satisfying KKT conditions")]
    ActiveSetCycling { limit: usize },

    #[error("{0} does not enforce box bounds: projecting onto the skew subspace and then the box is not the projection onto their intersection; use ADMM or the reference solver")]
    BoxNotSupported(&'static str),

    #[error("reference vector has zero norm")]
    ZeroReference,

    #[error("operator has zero maximal wave speed")]
    DegenerateOperator,

    #[error("convergence study failed at N = {n}: {reason}")]
    ConvergenceStudy { n: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Whether the failure comes from bad user input rather than numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_)
                | Error::BoxNotSupported(_)
                | Error::StencilTooWide { .. }
                | Error::DimensionMismatch { .. }
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}
