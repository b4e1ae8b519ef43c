use crate::solvers::RunRecord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A solver produced a non-finite iterate. `partial` holds every row
    /// logged before the failure.
    #[error("iterate diverged at iteration {iteration} (gamma = {gamma:e})")]
    Divergence {
        iteration: u64,
        gamma: f64,
        partial: Option<Box<RunRecord>>,
    },

    #[error("estimator state is stale: {0}")]
    StaleState(String),

    #[error("denoiser failed: {0}")]
    Denoiser(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
