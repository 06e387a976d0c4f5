use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::timeseries::{apply_scaler, TimeSeriesDataset};

use super::model::{ArmaxModel, ModelError, OutputCoeffs};

/// What the multi-step predictor feeds back as past outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    /// Every step uses the measured output lags (one-step-ahead prediction
    /// repeated along the horizon).
    Measured,
    /// No measurements after the seed window: predictions are fed back as
    /// output lags and residual lags decay to zero.
    FreeRun,
    /// Measurements are available up to (excluding) the given sample index;
    /// from there on the predictor free-runs. Models the loss of a sensor at
    /// a known instant.
    MeasuredUntil(usize),
}

impl FeedbackMode {
    /// Whether the measured output at sample `t` may be used.
    pub fn measured_at(&self, t: usize) -> bool {
        match *self {
            FeedbackMode::Measured => true,
            FeedbackMode::FreeRun => false,
            FeedbackMode::MeasuredUntil(cut) => t < cut,
        }
    }
}

/// The single place where the ARMAX difference equation is evaluated.
///
/// Lags are fetched through closures so that batch prediction (matrix
/// storage) and the streaming monitor (ring buffers) run the *same*
/// arithmetic in the same order, making their outputs bit-identical.
/// `y_lag(i)` must return the scaled output `i` steps back, `u_lag(j, d)` the
/// scaled input `j` exactly `d` steps back, and `e_lag(i)` the residual `i`
/// steps back.
#[inline]
pub(crate) fn one_step_scaled(
    coeffs: &OutputCoeffs,
    na: usize,
    nb: usize,
    nc: usize,
    nk: usize,
    n_inputs: usize,
    mut y_lag: impl FnMut(usize) -> f64,
    mut u_lag: impl FnMut(usize, usize) -> f64,
    mut e_lag: impl FnMut(usize) -> f64,
) -> f64 {
    let mut acc = 0.0;
    for i in 1..=na {
        acc += coeffs.ar[i - 1] * y_lag(i);
    }
    for j in 0..n_inputs {
        let exo = &coeffs.exo[j];
        for i in 1..=nb {
            acc += exo[i - 1] * u_lag(j, nk + i);
        }
    }
    for i in 1..=nc {
        acc += coeffs.ma[i - 1] * e_lag(i);
    }
    acc
}

/// Lag histories for a single one-step prediction, most recent value first:
/// `outputs[m][0]` is `y_m(t-1)`, `inputs[j][0]` is `u_j(t-1)`, and
/// `residuals[m][0]` is `e_m(t-1)`.
///
/// Outputs and inputs are in raw engineering units; residuals are one-step
/// prediction errors and therefore live in the model's scaled frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LagHistory {
    pub outputs: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub residuals: Vec<Vec<f64>>,
}

/// Predicts one step ahead for every output channel from explicit lag
/// histories. Returns predictions in raw units.
pub fn predict_one_step(model: &ArmaxModel, hist: &LagHistory) -> Result<Vec<f64>, ModelError> {
    let orders = *model.orders();
    let (n_in, n_out) = (model.n_inputs(), model.n_outputs());
    if hist.outputs.len() != n_out || hist.residuals.len() != n_out {
        return Err(ModelError::ChannelMismatch {
            reason: format!(
                "history covers {} output channels, model has {n_out}",
                hist.outputs.len()
            ),
        });
    }
    if hist.inputs.len() != n_in {
        return Err(ModelError::ChannelMismatch {
            reason: format!("history covers {} input channels, model has {n_in}", hist.inputs.len()),
        });
    }
    for lags in &hist.outputs {
        if lags.len() < orders.na {
            return Err(ModelError::LagShortfall {
                what: "output",
                needed: orders.na,
                got: lags.len(),
            });
        }
    }
    for lags in &hist.inputs {
        if lags.len() < orders.nb + orders.nk {
            return Err(ModelError::LagShortfall {
                what: "input",
                needed: orders.nb + orders.nk,
                got: lags.len(),
            });
        }
    }
    for lags in &hist.residuals {
        if lags.len() < orders.nc {
            return Err(ModelError::LagShortfall {
                what: "residual",
                needed: orders.nc,
                got: lags.len(),
            });
        }
    }

    let scaler = model.scaler();
    let mut predictions = Vec::with_capacity(n_out);
    for (m, coeffs) in model.output_coeffs().iter().enumerate() {
        let offset = scaler.output_offset(m);
        let gain = scaler.output_gain(m);
        let yhat = one_step_scaled(
            coeffs,
            orders.na,
            orders.nb,
            orders.nc,
            orders.nk,
            n_in,
            |i| (hist.outputs[m][i - 1] - offset) / gain,
            |j, d| (hist.inputs[j][d - 1] - scaler.input_offset(j)) / scaler.input_gain(j),
            |i| hist.residuals[m][i - 1],
        );
        predictions.push(scaler.unscale_output(m, yhat));
    }
    Ok(predictions)
}

/// Result of a multi-step prediction over a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonPrediction {
    /// Predicted outputs in raw units, aligned row-for-row with the dataset.
    /// The first `seed_len` rows are copies of the measurements that seeded
    /// the lag buffers.
    pub outputs: DMatrix<f64>,
    /// One-step residuals in the scaled frame; zero on seed rows and wherever
    /// the feedback mode withheld the measurement.
    pub residuals: DMatrix<f64>,
    /// Number of leading rows consumed as seed (`orders.max_lag()`).
    pub seed_len: usize,
}

/// Runs the model across an entire dataset under the chosen feedback mode.
///
/// The first `max_lag` rows seed the lag buffers from measurements. From
/// there, each step evaluates the one-step predictor; feedback then either
/// re-arms the buffers with the measured output (updating the residual) or
/// with the prediction itself (residual lag treated as zero), depending on
/// the mode.
pub fn predict_horizon(
    model: &ArmaxModel,
    data: &TimeSeriesDataset,
    mode: FeedbackMode,
) -> Result<HorizonPrediction, ModelError> {
    model.check_channels(data.input_names(), data.output_names())?;
    let orders = *model.orders();
    let seed_len = orders.max_lag();
    let rows = data.rows();
    if rows <= seed_len {
        return Err(ModelError::InsufficientData { rows, needed: seed_len + 1 });
    }
    if let FeedbackMode::MeasuredUntil(cut) = mode {
        if cut > rows {
            return Err(ModelError::FeedbackCutOutOfRange { cut, rows });
        }
    }

    let scaled = apply_scaler(model.scaler(), data).map_err(|e| ModelError::ChannelMismatch {
        reason: format!("scaling failed: {e}"),
    })?;
    let u_s = scaled.inputs();
    let y_meas_s = scaled.outputs();
    let n_out = model.n_outputs();
    let n_in = model.n_inputs();

    // Output lags as the predictor sees them (measured or fed back).
    let mut y_feed = DMatrix::zeros(rows, n_out);
    let mut residuals = DMatrix::zeros(rows, n_out);
    let mut outputs = DMatrix::zeros(rows, n_out);
    for t in 0..seed_len {
        for m in 0..n_out {
            y_feed[(t, m)] = y_meas_s[(t, m)];
            outputs[(t, m)] = data.outputs()[(t, m)];
        }
    }

    let scaler = model.scaler();
    for t in seed_len..rows {
        let measured = mode.measured_at(t);
        for (m, coeffs) in model.output_coeffs().iter().enumerate() {
            let yhat = one_step_scaled(
                coeffs,
                orders.na,
                orders.nb,
                orders.nc,
                orders.nk,
                n_in,
                |i| y_feed[(t - i, m)],
                |j, d| u_s[(t - d, j)],
                |i| residuals[(t - i, m)],
            );
            outputs[(t, m)] = scaler.unscale_output(m, yhat);
            if measured {
                residuals[(t, m)] = y_meas_s[(t, m)] - yhat;
                y_feed[(t, m)] = y_meas_s[(t, m)];
            } else {
                residuals[(t, m)] = 0.0;
                y_feed[(t, m)] = yhat;
            }
        }
    }

    Ok(HorizonPrediction { outputs, residuals, seed_len })
}
