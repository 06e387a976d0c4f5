//! Prediction-quality metrics and suite-level summaries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::armax::HorizonPrediction;
use crate::timeseries::TimeSeriesDataset;

/// Errors raised by metric computations.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    /// The two series must have equal, non-zero length.
    #[error("series lengths differ or are empty: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },

    /// Suite summaries need at least one scenario.
    #[error("no scenario summaries to aggregate")]
    EmptySuite,
}

fn check_pair(y: &[f64], yhat: &[f64]) -> Result<(), MetricsError> {
    if y.is_empty() || y.len() != yhat.len() {
        return Err(MetricsError::LengthMismatch { a: y.len(), b: yhat.len() });
    }
    Ok(())
}

/// Root-mean-square error between a measured series and its prediction.
pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64, MetricsError> {
    check_pair(y, yhat)?;
    let sse: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sse / y.len() as f64).sqrt())
}

/// RMSE normalized by the measured signal's range, in percent.
///
/// A constant measured signal has no range to normalize by: the result is 0
/// for a perfect prediction and infinite otherwise.
pub fn nrmse_pct(y: &[f64], yhat: &[f64]) -> Result<f64, MetricsError> {
    let e = rmse(y, yhat)?;
    let min = y.iter().copied().fold(f64::INFINITY, f64::min);
    let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if range == 0.0 {
        return Ok(if e == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(100.0 * e / range)
}

/// Variance-accounted-for style fit in percent:
/// `100 * (1 - ||y - yhat|| / ||y - mean(y)||)`. 100 is a perfect match; the
/// value is unbounded below. A constant measured signal yields 100 for a
/// perfect prediction and negative infinity otherwise.
pub fn fit_pct(y: &[f64], yhat: &[f64]) -> Result<f64, MetricsError> {
    check_pair(y, yhat)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let num: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let den: f64 = y.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>().sqrt();
    if den == 0.0 {
        return Ok(if num == 0.0 { 100.0 } else { f64::NEG_INFINITY });
    }
    Ok(100.0 * (1.0 - num / den))
}

/// Five-number summary plus mean of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

/// Linear-interpolation quantile (the "type 7" estimator used by most
/// statistics environments): for probability `p` the value at fractional
/// position `(n - 1) * p` of the sorted sample.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quartile statistics of a non-empty sample.
pub fn quartiles(values: &[f64]) -> Result<DistributionStats, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::LengthMismatch { a: 0, b: 0 });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("metrics operate on finite values"));
    Ok(DistributionStats {
        min: sorted[0],
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
        mean: values.iter().sum::<f64>() / values.len() as f64,
    })
}

/// Per-channel prediction quality for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub scenario: String,
    pub channels: Vec<String>,
    pub rmse: Vec<f64>,
    pub nrmse_pct: Vec<f64>,
    pub fit_pct: Vec<f64>,
}

impl ErrorSummary {
    /// Scores a horizon prediction against the measured dataset, skipping the
    /// seed rows (which are copies of the measurements, not predictions).
    pub fn from_prediction(
        scenario: impl Into<String>,
        data: &TimeSeriesDataset,
        prediction: &HorizonPrediction,
    ) -> Result<Self, MetricsError> {
        let rows = data.rows();
        if prediction.outputs.nrows() != rows || prediction.seed_len >= rows {
            return Err(MetricsError::LengthMismatch {
                a: prediction.outputs.nrows(),
                b: rows,
            });
        }
        let start = prediction.seed_len;
        let mut rmse_v = Vec::with_capacity(data.n_outputs());
        let mut nrmse_v = Vec::with_capacity(data.n_outputs());
        let mut fit_v = Vec::with_capacity(data.n_outputs());
        for m in 0..data.n_outputs() {
            let y: Vec<f64> = (start..rows).map(|t| data.outputs()[(t, m)]).collect();
            let yhat: Vec<f64> = (start..rows).map(|t| prediction.outputs[(t, m)]).collect();
            rmse_v.push(rmse(&y, &yhat)?);
            nrmse_v.push(nrmse_pct(&y, &yhat)?);
            fit_v.push(fit_pct(&y, &yhat)?);
        }
        Ok(Self {
            scenario: scenario.into(),
            channels: data.output_names().to_vec(),
            rmse: rmse_v,
            nrmse_pct: nrmse_v,
            fit_pct: fit_v,
        })
    }

    /// Mean RMSE across channels.
    pub fn mean_rmse(&self) -> f64 {
        self.rmse.iter().sum::<f64>() / self.rmse.len() as f64
    }

    /// Mean NRMSE (percent) across channels.
    pub fn mean_nrmse_pct(&self) -> f64 {
        self.nrmse_pct.iter().sum::<f64>() / self.nrmse_pct.len() as f64
    }
}

/// Distribution of one metric for one channel across a scenario suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDistribution {
    pub channel: String,
    pub rmse: DistributionStats,
    pub nrmse_pct: DistributionStats,
}

/// Suite-level aggregation: per-channel metric distributions across
/// scenarios (box-plot material) and per-scenario means across channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub scenarios: Vec<ErrorSummary>,
    pub per_channel: Vec<ChannelDistribution>,
    pub per_scenario_mean_rmse: Vec<f64>,
    pub per_scenario_mean_nrmse_pct: Vec<f64>,
}

/// Aggregates scenario summaries. All summaries must cover the same channel
/// list in the same order.
pub fn summarize_suite(results: &[ErrorSummary]) -> Result<SuiteReport, MetricsError> {
    let first = results.first().ok_or(MetricsError::EmptySuite)?;
    for r in results {
        if r.channels != first.channels {
            return Err(MetricsError::LengthMismatch {
                a: r.channels.len(),
                b: first.channels.len(),
            });
        }
    }
    let mut per_channel = Vec::with_capacity(first.channels.len());
    for (m, channel) in first.channels.iter().enumerate() {
        let rmse_samples: Vec<f64> = results.iter().map(|r| r.rmse[m]).collect();
        let nrmse_samples: Vec<f64> = results.iter().map(|r| r.nrmse_pct[m]).collect();
        per_channel.push(ChannelDistribution {
            channel: channel.clone(),
            rmse: quartiles(&rmse_samples)?,
            nrmse_pct: quartiles(&nrmse_samples)?,
        });
    }
    Ok(SuiteReport {
        scenarios: results.to_vec(),
        per_channel,
        per_scenario_mean_rmse: results.iter().map(|r| r.mean_rmse()).collect(),
        per_scenario_mean_nrmse_pct: results.iter().map(|r| r.mean_nrmse_pct()).collect(),
    })
}

impl SuiteReport {
    /// Flattens the per-channel scenario metrics to CSV, one row per
    /// (scenario, channel) pair: ready-made input for box-plot tooling.
    pub fn boxplot_csv(&self) -> String {
        let mut out = String::from("scenario,channel,rmse,nrmse_pct,fit_pct\n");
        for s in &self.scenarios {
            for (m, channel) in s.channels.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{:.6e},{:.6e},{:.6e}\n",
                    s.scenario, channel, s.rmse[m], s.nrmse_pct[m], s.fit_pct[m]
                ));
            }
        }
        out
    }
}
