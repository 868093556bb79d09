use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A virtual state has no weight in the single-mode qubit space.
    #[error("degenerate virtual state {j}X: qubit weight is zero")]
    DegenerateState { j: u8 },

    /// The three emitted qubit states no longer span a triangle on the Bloch sphere.
    #[error("coefficient matrix is singular (|det| = {det:.3e})")]
    SingularSystem { det: f64 },

    #[error("observed statistics are incompatible with the constraint polytope")]
    InfeasibleStatistics,

    #[error("no detections: Z-basis detection probability is zero")]
    NoDetection,
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures that come from the numerics rather than from bad input.
    pub fn is_numerical(&self) -> bool {
        !matches!(self, Error::InvalidArgument(_))
    }
}
