use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timeseries::ScalerParams;

/// Errors raised by model construction, prediction, and persistence.
#[derive(Debug, Error)]
pub enum ModelError {
    /// Not enough rows to seed the requested prediction or fit.
    #[error("dataset has {rows} rows but at least {needed} are needed")]
    InsufficientData { rows: usize, needed: usize },

    /// A lag history is shorter than the model orders require.
    #[error("{what} history holds {got} lags but the model needs {needed}")]
    LagShortfall { what: &'static str, needed: usize, got: usize },

    /// Channel names or counts of the data do not match the model.
    #[error("channel mismatch: {reason}")]
    ChannelMismatch { reason: String },

    /// Coefficient containers disagree with the declared orders.
    #[error("dimension mismatch: {reason}")]
    DimensionMismatch { reason: String },

    /// All orders are zero, leaving nothing to estimate or predict.
    #[error("model has no parameters (na, nb, and nc are all zero)")]
    EmptyModel,

    /// A feedback cut index lies outside the prediction horizon.
    #[error("feedback cut at {cut} exceeds the horizon of {rows} rows")]
    FeedbackCutOutOfRange { cut: usize, rows: usize },

    /// Persistence I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// Persistence encoding/decoding failure.
    #[error("model (de)serialization failed: {0}")]
    Serde(#[from] serde_json::Error),
}

/// Structural orders of an ARMAX model.
///
/// `na` counts autoregressive lags, `nb` exogenous lags per input, `nc`
/// moving-average lags, and `nk` is the pure input delay in samples: with
/// `nk = 0` the most recent input seen by the predictor at time `t` is
/// `u(t-1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmaxOrders {
    pub na: usize,
    pub nb: usize,
    pub nc: usize,
    #[serde(default)]
    pub nk: usize,
}

impl ArmaxOrders {
    pub fn new(na: usize, nb: usize, nc: usize, nk: usize) -> Self {
        Self { na, nb, nc, nk }
    }

    /// Free parameters for a single output given `n_inputs` input channels.
    pub fn param_count(&self, n_inputs: usize) -> usize {
        self.na + self.nb * n_inputs + self.nc
    }

    /// Deepest lag the regressor reaches back, hence the number of seed rows
    /// a prediction needs before it can produce its first estimate.
    pub fn max_lag(&self) -> usize {
        self.na.max(self.nb + self.nk).max(self.nc)
    }

    /// Rejects structures with nothing to estimate.
    pub fn validate(&self, n_inputs: usize) -> Result<(), ModelError> {
        if self.param_count(n_inputs) == 0 {
            return Err(ModelError::EmptyModel);
        }
        Ok(())
    }
}

/// Fitted coefficients for one output channel, in the scaled frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputCoeffs {
    /// Autoregressive coefficients `alpha_1..alpha_na`.
    pub ar: Vec<f64>,
    /// Exogenous coefficients per input: `exo[j][i-1]` multiplies
    /// `u_j(t - nk - i)`.
    pub exo: Vec<Vec<f64>>,
    /// Moving-average coefficients `beta_1..beta_nc`.
    pub ma: Vec<f64>,
}

impl OutputCoeffs {
    /// All-zero coefficients matching `orders` and `n_inputs`.
    pub fn zeros(orders: &ArmaxOrders, n_inputs: usize) -> Self {
        Self {
            ar: vec![0.0; orders.na],
            exo: vec![vec![0.0; orders.nb]; n_inputs],
            ma: vec![0.0; orders.nc],
        }
    }

    /// Flattens to the parameter vector layout shared with the estimators:
    /// `[ar | exo input 0 | exo input 1 | ... | ma]`.
    pub fn to_theta(&self) -> DVector<f64> {
        let mut theta = Vec::with_capacity(self.ar.len() + self.ma.len());
        theta.extend_from_slice(&self.ar);
        for exo in &self.exo {
            theta.extend_from_slice(exo);
        }
        theta.extend_from_slice(&self.ma);
        DVector::from_vec(theta)
    }

    /// Inverse of [`Self::to_theta`].
    pub fn from_theta(
        theta: &DVector<f64>,
        orders: &ArmaxOrders,
        n_inputs: usize,
    ) -> Result<Self, ModelError> {
        let expected = orders.param_count(n_inputs);
        if theta.len() != expected {
            return Err(ModelError::DimensionMismatch {
                reason: format!("theta has {} entries, orders imply {expected}", theta.len()),
            });
        }
        let v = theta.as_slice();
        let mut at = 0usize;
        let ar = v[at..at + orders.na].to_vec();
        at += orders.na;
        let mut exo = Vec::with_capacity(n_inputs);
        for _ in 0..n_inputs {
            exo.push(v[at..at + orders.nb].to_vec());
            at += orders.nb;
        }
        let ma = v[at..at + orders.nc].to_vec();
        Ok(Self { ar, exo, ma })
    }

    fn check(&self, orders: &ArmaxOrders, n_inputs: usize) -> Result<(), ModelError> {
        if self.ar.len() != orders.na {
            return Err(ModelError::DimensionMismatch {
                reason: format!("{} AR coefficients, orders say {}", self.ar.len(), orders.na),
            });
        }
        if self.exo.len() != n_inputs || self.exo.iter().any(|e| e.len() != orders.nb) {
            return Err(ModelError::DimensionMismatch {
                reason: format!(
                    "exogenous coefficients must be {n_inputs} blocks of {}",
                    orders.nb
                ),
            });
        }
        if self.ma.len() != orders.nc {
            return Err(ModelError::DimensionMismatch {
                reason: format!("{} MA coefficients, orders say {}", self.ma.len(), orders.nc),
            });
        }
        Ok(())
    }
}

/// Provenance recorded with every fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    /// RFC 3339 timestamp of the fit.
    pub fitted_at: String,
    /// Rows of training data consumed.
    pub training_rows: usize,
    /// Solver passes taken by the slowest output channel.
    pub solver_iterations: usize,
    /// RNG seed of the data-producing run, when known.
    pub seed: Option<u64>,
    /// Hash of the configuration that produced the fit, when known.
    pub config_hash: Option<String>,
    /// Monotonically increasing version; recalibration bumps it.
    pub version: u32,
}

impl FitMeta {
    pub fn now(training_rows: usize, solver_iterations: usize) -> Self {
        Self {
            fitted_at: chrono::Utc::now().to_rfc3339(),
            training_rows,
            solver_iterations,
            seed: None,
            config_hash: None,
            version: 1,
        }
    }
}

/// A complete fitted surrogate: structure, per-output coefficients, channel
/// names, the scaler that defines its internal frame, and fit provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaxModel {
    orders: ArmaxOrders,
    outputs: Vec<OutputCoeffs>,
    input_names: Vec<String>,
    output_names: Vec<String>,
    scaler: ScalerParams,
    meta: FitMeta,
}

impl ArmaxModel {
    /// Assembles and validates a model: coefficient shapes must match the
    /// orders, and the scaler must cover exactly the named channels.
    pub fn new(
        orders: ArmaxOrders,
        outputs: Vec<OutputCoeffs>,
        input_names: Vec<String>,
        output_names: Vec<String>,
        scaler: ScalerParams,
        meta: FitMeta,
    ) -> Result<Self, ModelError> {
        orders.validate(input_names.len())?;
        if outputs.len() != output_names.len() {
            return Err(ModelError::DimensionMismatch {
                reason: format!(
                    "{} coefficient sets for {} output channels",
                    outputs.len(),
                    output_names.len()
                ),
            });
        }
        if output_names.is_empty() {
            return Err(ModelError::DimensionMismatch {
                reason: "a model needs at least one output channel".into(),
            });
        }
        for coeffs in &outputs {
            coeffs.check(&orders, input_names.len())?;
        }
        if scaler.n_inputs() != input_names.len() || scaler.n_outputs() != output_names.len() {
            return Err(ModelError::ChannelMismatch {
                reason: format!(
                    "scaler covers {}/{} channels, model has {}/{}",
                    scaler.n_inputs(),
                    scaler.n_outputs(),
                    input_names.len(),
                    output_names.len()
                ),
            });
        }
        Ok(Self { orders, outputs, input_names, output_names, scaler, meta })
    }

    pub fn orders(&self) -> &ArmaxOrders {
        &self.orders
    }

    pub fn output_coeffs(&self) -> &[OutputCoeffs] {
        &self.outputs
    }

    pub fn input_names(&self) -> &[String] {
        &self.input_names
    }

    pub fn output_names(&self) -> &[String] {
        &self.output_names
    }

    pub fn scaler(&self) -> &ScalerParams {
        &self.scaler
    }

    pub fn meta(&self) -> &FitMeta {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut FitMeta {
        &mut self.meta
    }

    pub fn n_inputs(&self) -> usize {
        self.input_names.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.output_names.len()
    }

    /// Free parameters per output channel.
    pub fn param_count(&self) -> usize {
        self.orders.param_count(self.n_inputs())
    }

    /// Checks that `names` matches this model's channel naming exactly; used
    /// by every consumer of external data.
    pub(crate) fn check_channels(
        &self,
        input_names: &[String],
        output_names: &[String],
    ) -> Result<(), ModelError> {
        if input_names != self.input_names.as_slice()
            || output_names != self.output_names.as_slice()
        {
            return Err(ModelError::ChannelMismatch {
                reason: format!(
                    "data channels ({:?} -> {:?}) differ from model channels ({:?} -> {:?})",
                    input_names, output_names, self.input_names, self.output_names
                ),
            });
        }
        Ok(())
    }

    /// Serializes to pretty JSON.
    pub fn to_json(&self) -> Result<String, ModelError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes the model to `path` as JSON.
    pub fn save_json(&self, path: &Path) -> Result<(), ModelError> {
        let file = File::create(path)?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)?;
        Ok(())
    }

    /// Reads a model from JSON, revalidating every structural invariant so a
    /// hand-edited file cannot smuggle in inconsistent shapes.
    pub fn load_json(path: &Path) -> Result<Self, ModelError> {
        let file = File::open(path)?;
        let raw: ArmaxModel = serde_json::from_reader(BufReader::new(file))?;
        Self::new(
            raw.orders,
            raw.outputs,
            raw.input_names,
            raw.output_names,
            raw.scaler,
            raw.meta,
        )
    }
}
