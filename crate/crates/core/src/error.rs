use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix `{name}` is not symmetric: |A[{row},{col}] - A[{col},{row}]| = {gap:e}")]
    NotSymmetric {
        name: &'static str,
        row: usize,
        col: usize,
        gap: f64,
    },

    #[error("matrix `{name}` is not positive definite: eigenvalue #{index} = {value:e}")]
    NotPositiveDefinite {
        name: &'static str,
        index: usize,
        value: f64,
    },

    #[error("dimension mismatch for `{name}`: expected {expected}, got {found}")]
    DimensionMismatch {
        name: &'static str,
        expected: String,
        found: String,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("factorization failed in {context} (min diagonal {min_diag:e}, max diagonal {max_diag:e})")]
    Factorization {
        context: &'static str,
        min_diag: f64,
        max_diag: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error{}: {message}", key.as_ref().map(|k| format!(" at key `{k}`")).unwrap_or_default())]
    Config { key: Option<String>, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotSymmetric { .. } => "not_symmetric",
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::Factorization { .. } => "factorization",
            Error::Numerical(_) => "numerical",
            Error::Config { .. } => "config",
            Error::Io { .. } => "io",
        }
    }

    /// Process exit code: 2 for IO, 3 for parse/validation, 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            Error::Factorization { .. } | Error::Numerical(_) => 4,
            _ => 3,
        }
    }
}
