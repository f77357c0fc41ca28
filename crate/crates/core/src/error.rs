use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter lies outside its admissible range.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative or quadrature routine failed to reach its tolerance.
    #[error("numeric failure: {message} (achieved {achieved:e})")]
    Numeric { message: String, achieved: f64 },

    /// Data violates a solvability or balance condition.
    #[error("compatibility error: {0}")]
    Compatibility(String),

    /// Array shapes do not match the grid they claim to live on.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Geometry does not fit the grid (clearance, empty window, ...).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// The grid is too coarse for the requested construction.
    #[error("resolution error: {0}")]
    Resolution(String),

    /// A documented precondition of the operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Malformed input file or text.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn numeric(message: impl Into<String>, achieved: f64) -> Self {
        Error::Numeric {
            message: message.into(),
            achieved,
        }
    }
}
