use thiserror::Error;

/// Failures reported by the library. Each variant names enough context to
/// locate the offending input or the tripped invariant.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{what} is not Hermitian (defect {defect:.3e})")]
    NotHermitian { what: &'static str, defect: f64 },

    #[error("state is not normalized (norm {norm:.15})")]
    NotNormalized { norm: f64 },

    #[error("invalid density operator: {0}")]
    NotDensity(String),

    #[error("invalid projector family: {0}")]
    NotProjectorFamily(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("label out of range: {0}")]
    Label(String),

    #[error("refused: {0}")]
    Refused(String),

    #[error("numerical guard tripped in {module}: {invariant} (value {value:.3e})")]
    Guard { module: &'static str, invariant: String, value: f64 },
}

impl Error {
    pub fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { field: field.into(), reason: reason.into() }
    }

    pub fn guard(module: &'static str, invariant: impl Into<String>, value: f64) -> Self {
        Error::Guard { module, invariant: invariant.into(), value }
    }

    /// True for failures caused by the numerics rather than by the input.
    pub fn is_guard(&self) -> bool {
        matches!(self, Error::Guard { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
