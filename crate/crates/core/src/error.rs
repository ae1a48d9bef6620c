use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("under-resolved: {0}")]
    UnderResolved(String),

    #[error("flip axis outside trusted region: |a| = {axis} exceeds x_max/2 = {limit}")]
    FlipAxisOutOfRange { axis: f64, limit: f64 },

    #[error("grid mismatch: fields live on different grids")]
    GridMismatch,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dense representation too large: M = {m} exceeds {limit}")]
    DenseTooLarge { m: usize, limit: usize },

    #[error(
        "SVD did not converge on the {m}x{m} biphoton matrix (dx = {dx:.3e}, x_max = {x_max})"
    )]
    SvdNoConvergence { m: usize, dx: f64, x_max: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("no coincidences")]
    NoCoincidences,

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("report format error: {0}")]
    Report(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// True for failures of the numerics themselves rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SvdNoConvergence { .. } | Error::InvalidDensityMatrix(_) | Error::NoCoincidences
        )
    }
}
