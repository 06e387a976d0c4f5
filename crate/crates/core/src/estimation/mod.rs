//! Parameter estimation: batch pseudo-linear least squares, recursive least
//! squares with forgetting, and information-richness ranking of candidate
//! training events.

mod batch;
mod recursive;
mod richness;

pub use batch::{
    build_regressor, fit_batch_els, FitConfig, FitReport, OutputFitReport, ResidualConvention,
};
pub use recursive::{finalize_rls, fit_recursive, RlsState};
pub use richness::{richness_scores, select_training_index, spectral_entropy};

use thiserror::Error;

use crate::armax::ModelError;
use crate::timeseries::DataError;

/// Errors raised by the estimators.
#[derive(Debug, Error)]
pub enum EstimationError {
    /// Too few rows for the requested structure: a fit needs strictly more
    /// rows than `max_lag + param_count`.
    #[error("dataset has {rows} rows but the fit needs at least {needed}")]
    InsufficientData { rows: usize, needed: usize },

    /// The normal equations are rank deficient (collinear or constant
    /// regressor columns), so no unique coefficient vector exists.
    #[error("normal equations are singular for output `{output}`")]
    SingularNormalEquations { output: String },

    /// A recursive update produced NaN or infinity, typically from a
    /// collapsed covariance or wild data.
    #[error("recursive update {update} produced a non-finite value")]
    NonFiniteUpdate { update: usize },

    /// Vector/matrix shapes disagree with the declared orders.
    #[error("dimension mismatch: {reason}")]
    DimensionMismatch { reason: String },

    /// A configuration field is outside its legal range.
    #[error("invalid fit configuration: {reason}")]
    InvalidConfig { reason: String },

    /// Selection was asked to rank an empty set of candidates.
    #[error("no candidate datasets to select from")]
    NoCandidates,

    /// Propagated data/scaling failure.
    #[error(transparent)]
    Data(#[from] DataError),

    /// Propagated model-structure failure.
    #[error(transparent)]
    Model(#[from] ModelError),
}
