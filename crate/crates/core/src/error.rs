use thiserror::Error;

use crate::inverse::LossHistory;

/// Errors produced by the scattering library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{func}: argument {value} outside the domain")]
    Domain { func: &'static str, value: f64 },

    #[error("matrix is singular to working precision (pivot {pivot:.3e} in column {column})")]
    SingularMatrix { column: usize, pivot: f64 },

    #[error("oscillator is driven at its undamped resonance")]
    ResonantSingular,

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("scaled distance {value} outside spline fit domain [{lo}, {hi}]")]
    OutOfDomain { value: f64, lo: f64, hi: f64 },

    #[error("derivative requested at coincident points")]
    DegenerateDistance,

    #[error("centroid of the reference cluster coincides with the forcing location")]
    CentroidSingular,

    #[error("channel {0} has zero variance")]
    DegenerateChannel(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("all {0} starts failed")]
    AllStartsFailed(usize),

    #[error("non-finite loss at epoch {epoch}")]
    Diverged {
        epoch: usize,
        history: Box<LossHistory>,
    },

    #[error("kernel matrix is not positive definite after jitter escalation")]
    Cholesky,

    #[error("stage mismatch: {0}")]
    StageMismatch(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn at_sample(self, index: usize) -> Error {
        Error::Sample {
            index,
            source: Box::new(self),
        }
    }

    /// True for failures of the numerical model itself, as opposed to
    /// configuration or I/O problems.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::SingularMatrix { .. }
            | Error::ResonantSingular
            | Error::OutOfDomain { .. }
            | Error::DegenerateDistance
            | Error::CentroidSingular
            | Error::DegenerateChannel(_)
            | Error::AllStartsFailed(_)
            | Error::Diverged { .. }
            | Error::Cholesky
            | Error::Domain { .. } => true,
            Error::Sample { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
