use thiserror::Error;

use crate::geometry::Point;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point {0:?} is not in the domain interior")]
    OutsideDomain(Point),

    #[error("point {0:?} is not in the domain exterior")]
    NotExterior(Point),

    #[error("singular evaluation: {0}")]
    Singular(String),

    #[error("lattice too coarse: {found} interior points, need at least {required}")]
    Resolution { found: usize, required: usize },

    #[error("domain erosion by {radius} leaves an empty set")]
    EmptyErosion { radius: f64 },

    #[error("subset check failed at {0:?}")]
    SubsetViolation(Point),

    #[error("source function is negative ({value}) at {at:?}")]
    NegativeSource { at: Point, value: f64 },

    #[error("quadrature did not reach tolerance {tol:e} (error estimate {estimate:e})")]
    QuadratureCap { tol: f64, estimate: f64 },

    #[error("{truncated} of {total} walks hit the step cap")]
    ExcessiveTruncation { truncated: u64, total: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::QuadratureCap { .. } | Error::ExcessiveTruncation { .. }
        )
    }
}
