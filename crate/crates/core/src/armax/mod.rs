//! ARMAX model structure, prediction, and persistence.
//!
//! A multi-output plant is represented as a bank of independent
//! multi-input/single-output ARMAX models, one per output channel:
//!
//! ```text
//! y_m(t) = sum_i alpha_i y_m(t-i)
//!        + sum_j sum_i gamma_{j,i} u_j(t-nk-i)
//!        + e(t) + sum_i beta_i e(t-i)
//! ```
//!
//! with AR order `na`, per-input exogenous order `nb`, moving-average order
//! `nc`, and a common input dead time `nk`. All coefficients live in the
//! scaled frame defined by the model's [`ScalerParams`]; the public
//! prediction APIs accept and return raw engineering units and perform the
//! frame changes internally.

mod model;
mod predict;
mod stability;

pub use model::{ArmaxModel, ArmaxOrders, FitMeta, ModelError, OutputCoeffs};
pub use predict::{
    predict_horizon, predict_one_step, FeedbackMode, HorizonPrediction, LagHistory,
};
pub(crate) use predict::one_step_scaled;
pub use stability::{check_stability, StabilityEntry};
pub(crate) use stability::ar_stability;
