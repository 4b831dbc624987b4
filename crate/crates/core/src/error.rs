use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid value for `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("config: missing required key `{0}`")]
    MissingKey(String),

    #[error("config line {line}: {reason}")]
    ConfigSyntax { line: usize, reason: String },

    #[error("realization has no transmitter to associate with")]
    NoTransmitter,

    #[error("quadrature did not converge in kernel {kernel} (error estimate {error_estimate:.3e})")]
    Quadrature {
        kernel: &'static str,
        error_estimate: f64,
    },

    #[error("mean load undefined: {0}")]
    UndefinedLoad(&'static str),

    #[error("association probability of the {0} tier vanishes; conditional coverage undefined")]
    VanishingAssociation(&'static str),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}
