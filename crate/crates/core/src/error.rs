use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid value for `{field}`: {reason}")]
    InvalidField { field: String, reason: String },

    #[error("pairing {method} needs an even number of users, got {count}")]
    OddUserCount { method: String, count: usize },

    #[error("infeasible: {reason} (worst residual {worst_residual:.3e})")]
    Infeasible { reason: String, worst_residual: f64 },

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    pub fn field(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidField {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn infeasible(reason: impl Into<String>, worst_residual: f64) -> Self {
        Error::Infeasible {
            reason: reason.into(),
            worst_residual,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
