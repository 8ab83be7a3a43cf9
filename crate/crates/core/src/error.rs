//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation's precondition.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The design matrix is rank deficient; the named columns are linear
    /// combinations of earlier columns.
    #[error("singular design: dependent columns {columns:?}")]
    Singular { columns: Vec<String> },

    /// Coordinate descent ran out of sweeps. Carries the last iterate so a
    /// caller can inspect how far the solver got.
    #[error("coordinate descent did not converge after {sweeps} sweeps (last max update {gap:.3e})")]
    NonConvergence {
        sweeps: usize,
        gap: f64,
        last_coefficients: Vec<f64>,
    },

    /// The estimated instrument has (numerically) zero covariance with the
    /// treatment, so the IV ratio is undefined.
    #[error("weak identification: {0}")]
    WeakIdentification(String),

    /// A leave-one-out regression has leverage >= 1 at the listed rows, so
    /// the jackknife prediction is undefined there.
    #[error("jackknife singularity: leverage >= 1 at rows {rows:?}")]
    JackknifeSingular { rows: Vec<usize> },

    /// Leave-one-out examiner means need at least two cases per examiner.
    #[error("examiners with a single case: {ids:?}")]
    SingleCaseExaminers { ids: Vec<u64> },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn weak_identification(msg: impl Into<String>) -> Self {
        Error::WeakIdentification(msg.into())
    }
}
