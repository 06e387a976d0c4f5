//! Surrogate modelling toolkit for inverter-based resources (IBRs).
//!
//! The crate identifies discrete-time ARMAX models from terminal measurements
//! of grid-forming and grid-following inverters (or any other multi-channel
//! plant), predicts responses over arbitrary horizons with or without measured
//! output feedback, and keeps deployed models honest through a continual
//! validation loop that recalibrates when prediction quality degrades.
//!
//! The main building blocks:
//!
//! * [`timeseries`] — uniformly sampled multi-channel datasets, channel
//!   scaling, and CSV interchange.
//! * [`armax`] — model structure, regressor construction, one-step and
//!   multi-step prediction, stability checks, and JSON persistence.
//! * [`estimation`] — batch pseudo-linear least squares (extended least
//!   squares) and recursive least squares with forgetting, plus
//!   spectral-entropy ranking for training-event selection.
//! * [`plant`] — reference simulators used to exercise the identification
//!   pipeline: droop-controlled grid-forming and PLL-based grid-following
//!   phasor models, an exact linear ARMAX truth plant, and an EMT voltage-dip
//!   generator with a residential load bank.
//! * [`monitor`] — the continual validation loop: rolling error windows,
//!   patience-based recalibration triggers, and a replayable event log.
//! * [`metrics`] — RMSE/NRMSE/fit metrics and suite-level summaries.

pub mod armax;
pub mod estimation;
pub mod metrics;
pub mod monitor;
pub mod plant;
pub mod timeseries;

pub use armax::{
    check_stability, predict_one_step, predict_horizon, ArmaxModel, ArmaxOrders, FeedbackMode,
    FitMeta, HorizonPrediction, LagHistory, ModelError, OutputCoeffs, StabilityEntry,
};
pub use estimation::{
    build_regressor, finalize_rls, fit_batch_els, fit_recursive, richness_scores,
    select_training_index, spectral_entropy, EstimationError, FitConfig, FitReport,
    OutputFitReport, ResidualConvention, RlsState,
};
pub use metrics::{
    fit_pct, nrmse_pct, quartiles, rmse, summarize_suite, ChannelDistribution, DistributionStats,
    ErrorSummary, MetricsError, SuiteReport,
};
pub use monitor::{
    replay_versions, Monitor, MonitorConfig, MonitorError, MonitorEvent, MonitorEventKind,
    RecalMethod, StepResult,
};
pub use plant::{
    generate_event_suite, residential_loads, simulate, DipScenario, EmtDipConfig, Event,
    EventShape, GflConfig, GfmConfig, LinearTruthConfig, LoadModel, PlantKind, ScenarioConfig,
    SimError, EMT_SAMPLE_PERIOD_S, PHASOR_SAMPLE_PERIOD_S,
};
pub use timeseries::{
    apply_scaler, export_csv, fit_scaler, ingest_csv, ingest_stream_csv, invert_scaler,
    ChannelRoles, DataError, ScalerMode, ScalerParams, StreamData, StreamIssue, StreamRepair,
    StreamSample, TimeSeriesDataset,
};
