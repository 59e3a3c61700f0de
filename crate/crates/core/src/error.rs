use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A coefficient returned NaN or infinity at the named point.
    #[error("non-finite evaluation of {what} at xi = {xi}")]
    NonFinite { what: &'static str, xi: f64 },

    /// Fields from different grids were combined.
    #[error("grid mismatch: {0}")]
    ShapeMismatch(String),

    /// A state value left the covered velocity range.
    #[error("state value {value} outside velocity grid [{min}, {max}]")]
    RangeExceeded { value: f64, min: f64, max: f64 },

    /// The time stepper produced a non-finite state (CFL violation or worse).
    #[error("solution blew up at step {step}")]
    BlowUp { step: usize },

    /// An argument violated a documented precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A parameter lies outside the admissible domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested coefficient combination is not supported.
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
