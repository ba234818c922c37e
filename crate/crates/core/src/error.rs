use thiserror::Error;

/// Errors raised anywhere in the soliton toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolitonError {
    /// An argument lies outside the domain of the reduced equations (s <= 0, alpha <= 0, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// The flow parameters do not have the form an operation requires.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A series start was requested where the truncated series is not accurate enough.
    #[error("precision error: {0}")]
    Precision(String),

    /// The adaptive integrator hit its step floor without an escape of |w|.
    #[error("step collapse at s = {s} (w = {w}, h = {h})")]
    StepCollapse { s: f64, w: f64, h: f64 },

    /// A bracketing or shooting search could not be set up.
    #[error("search failure: {0}")]
    SearchFailure(String),

    /// The causal sign of W^2 changes over the unmasked region of a grid field.
    #[error("degenerate field: {0}")]
    Degenerate(String),

    /// Invalid configuration (grid, quadrant mask, integrator settings).
    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for SolitonError {
    fn from(e: std::io::Error) -> Self {
        SolitonError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SolitonError>;
