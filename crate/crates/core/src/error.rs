//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Two series that must share step size and length do not, or a window
    /// does not divide a series.
    #[error("series misaligned: {0}")]
    Alignment(String),

    /// An argument is outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A requested battery power exceeds the rating.
    #[error("power {requested_mw} MW exceeds rating {p_max_mw} MW")]
    PowerLimit { requested_mw: f64, p_max_mw: f64 },

    /// A battery step would push the state of charge outside its bounds.
    #[error("SoC {soc} outside [{soc_min}, {soc_max}]")]
    SocViolation { soc: f64, soc_min: f64, soc_max: f64 },

    /// The LP solver broke down (iteration cap, singular basis).
    #[error("solver error: {0}")]
    Solver(String),

    /// Input data failed validation.
    #[error("validation error: {0}")]
    Validation(String),

    /// Underlying I/O failure.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
