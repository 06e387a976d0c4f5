//! Reference plants that exercise the identification pipeline.
//!
//! Two phasor-domain inverter models integrate continuous dynamics with a
//! classic fourth-order Runge-Kutta scheme at the sampling rate (events are
//! snapped to the sample grid so every integration interval stays smooth):
//!
//! * [`GfmConfig`] — a droop-controlled grid-forming inverter: filtered
//!   active/reactive power set the frequency and voltage through droop gains.
//! * [`GflConfig`] — a grid-following inverter: an SRF-PLL tracks the grid
//!   angle while first-order current loops chase power references.
//!
//! Two discrete-time plants complete the set:
//!
//! * [`LinearTruthConfig`] — an exact ARMAX recursion with known
//!   coefficients, the ground truth for estimator accuracy checks.
//! * [`EmtDipConfig`] — a point-on-wave voltage-dip generator feeding a bank
//!   of linear residential load models (HVAC, PV, EV charger) at EMT rates.
//!
//! [`ScenarioConfig`] wraps any plant with an event list, duration, sampling,
//! noise level, and RNG seed; [`generate_event_suite`] derives families of
//! randomized scenarios from a base scenario.

mod emt;
mod events;
mod gfl;
mod gfm;
mod linear_truth;
mod rk4;
mod scenario;
mod suite;

pub use emt::{residential_loads, DipScenario, EmtDipConfig, LoadModel};
pub use events::{Event, EventShape};
pub use gfl::GflConfig;
pub use gfm::GfmConfig;
pub use linear_truth::LinearTruthConfig;
pub use scenario::{
    simulate, PlantKind, ScenarioConfig, EMT_SAMPLE_PERIOD_S, PHASOR_SAMPLE_PERIOD_S,
};
pub use suite::generate_event_suite;

use thiserror::Error;

use crate::timeseries::DataError;

/// Errors raised while validating or running a simulation scenario.
#[derive(Debug, Error)]
pub enum SimError {
    /// An event names a channel the plant does not expose.
    #[error("event targets unknown input channel `{channel}`")]
    UnknownEventChannel { channel: String },

    /// The event shape cannot be applied to this plant.
    #[error("unsupported event: {reason}")]
    UnsupportedEvent { reason: String },

    /// Scenario fields are out of range or inconsistent.
    #[error("invalid scenario: {reason}")]
    InvalidScenario { reason: String },

    /// The grid-following model lost its operating point: terminal voltage
    /// at or below the collapse floor.
    #[error("voltage collapse at t = {t:.6} s (v = {v:.4} p.u.)")]
    VoltageCollapse { t: f64, v: f64 },

    /// A linear truth channel has an AR root on or outside the unit circle.
    #[error("linear truth output {output} is unstable (max root magnitude {magnitude:.6})")]
    UnstableTruth { output: usize, magnitude: f64 },

    /// A load model's recursion is unstable.
    #[error("load `{name}` is unstable (max root magnitude {magnitude:.6})")]
    UnstableLoad { name: String, magnitude: f64 },

    /// Suites need at least two scenarios to be worth generating.
    #[error("event suite needs at least 2 scenarios, requested {requested}")]
    SuiteTooSmall { requested: usize },

    /// Propagated dataset-construction failure.
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Voltage magnitude (p.u.) below which the grid-following model is
/// considered collapsed.
pub(crate) const VOLTAGE_COLLAPSE_FLOOR: f64 = 0.1;
