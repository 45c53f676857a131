use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid config at `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("unsupported return model for this path: {0}")]
    UnsupportedModel(&'static str),

    #[error("solver did not converge (last iterate {last_iterate}, residual {residual:e})")]
    NonConvergence { last_iterate: f64, residual: f64 },

    #[error("environment violates model assumptions: {0}")]
    ModelViolation(String),

    #[error("slot {slot}: {source}")]
    Slot {
        slot: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config { field: field.into(), reason: reason.into() }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Prefixes the field path of a config error, e.g. `sigma` -> `returns.sigma`.
    pub fn within(self, parent: &str) -> Self {
        match self {
            Error::Config { field, reason } => {
                let mut path = String::from(parent);
                path.push('.');
                path.push_str(&field);
                Error::Config { field: path, reason }
            }
            other => other,
        }
    }
}
