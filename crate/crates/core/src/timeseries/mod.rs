//! Uniformly sampled multi-channel time series and their interchange formats.
//!
//! A [`TimeSeriesDataset`] is the common currency of the crate: simulators
//! produce one, the estimators consume one, and predictions come back as
//! matrices aligned with one. Channel scaling ([`ScalerParams`]) and CSV
//! ingest/export live here as well because they are properties of the data,
//! not of any particular model.

mod csv_io;
mod dataset;
mod scaler;

pub use csv_io::{
    export_csv, ingest_csv, ingest_stream_csv, ChannelRoles, StreamData, StreamIssue,
    StreamRepair, StreamSample,
};
pub use dataset::TimeSeriesDataset;
pub use scaler::{apply_scaler, fit_scaler, invert_scaler, ScalerMode, ScalerParams};

use thiserror::Error;

/// Errors raised while constructing, scaling, or ingesting time-series data.
#[derive(Debug, Error)]
pub enum DataError {
    /// The file contained a header (or nothing at all) but no data rows.
    #[error("no data rows in `{path}`")]
    EmptyFile { path: String },

    /// A channel named in the roles was not present in the CSV header.
    #[error("column `{name}` not found in CSV header")]
    MissingColumn { name: String },

    /// Timestamps deviate from a uniform grid by more than the tolerated jitter.
    #[error(
        "non-uniform sampling at row {row}: interval {found:.9} differs from inferred period {expected:.9}"
    )]
    NonUniformSampling { row: usize, found: f64, expected: f64 },

    /// A value failed to parse or was NaN/infinite.
    #[error("non-finite or unparseable value in column `{column}` at row {row}")]
    NonFiniteValue { column: String, row: usize },

    /// Fewer than two rows, so no sample period can be inferred.
    #[error("{rows} data row(s) is too few to infer a sample period")]
    TooFewRows { rows: usize },

    /// Scaler/channel bookkeeping does not match the dataset shape.
    #[error("channel count mismatch: expected {expected}, got {got}")]
    ChannelCountMismatch { expected: usize, got: usize },

    /// Construction arguments are internally inconsistent.
    #[error("inconsistent dataset shape: {reason}")]
    Shape { reason: String },

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// Underlying CSV reader/writer failure.
    #[error(transparent)]
    Csv(#[from] ::csv::Error),
}

/// Relative jitter tolerated when checking timestamps against the inferred
/// uniform sample period.
pub(crate) const SAMPLING_JITTER_TOL: f64 = 1e-3;
