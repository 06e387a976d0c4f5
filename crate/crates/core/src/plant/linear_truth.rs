use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::armax::{ar_stability, ArmaxOrders, OutputCoeffs};
use crate::timeseries::TimeSeriesDataset;

use super::events::{snap_to_grid, EventShape};
use super::scenario::{stream_rng, ScenarioConfig};
use super::SimError;

/// An exact discrete-time ARMAX plant with known coefficients: the ground
/// truth for estimator accuracy checks.
///
/// Inputs are zero-based and shaped purely by the scenario's events (steps,
/// pulses, damped sines evaluated on the sample grid, and PRBS). The
/// scenario's `noise_sigma` sets the standard deviation of the Gaussian
/// innovations `e(t)` that drive the recursion
///
/// ```text
/// y_m(t) = sum alpha_i y_m(t-i) + sum_j sum_i gamma_{j,i} u_j(t-nk-i)
///        + e_m(t) + sum beta_i e_m(t-i)
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearTruthConfig {
    pub orders: ArmaxOrders,
    /// True coefficients per output channel.
    pub outputs: Vec<OutputCoeffs>,
    pub input_names: Vec<String>,
    pub output_names: Vec<String>,
    /// Pre-sample output lags per channel, most recent first
    /// (`initial_outputs[m][0]` is `y_m(-1)`). Missing entries are zero.
    #[serde(default)]
    pub initial_outputs: Vec<Vec<f64>>,
}

impl LinearTruthConfig {
    fn validate(&self) -> Result<(), SimError> {
        if self.output_names.is_empty() || self.outputs.len() != self.output_names.len() {
            return Err(SimError::InvalidScenario {
                reason: format!(
                    "{} coefficient sets for {} named outputs",
                    self.outputs.len(),
                    self.output_names.len()
                ),
            });
        }
        for (m, c) in self.outputs.iter().enumerate() {
            if c.ar.len() != self.orders.na
                || c.ma.len() != self.orders.nc
                || c.exo.len() != self.input_names.len()
                || c.exo.iter().any(|e| e.len() != self.orders.nb)
            {
                return Err(SimError::InvalidScenario {
                    reason: format!("coefficients of output {m} do not match the orders"),
                });
            }
        }
        for (m, c) in self.outputs.iter().enumerate() {
            let stability = ar_stability(&c.ar);
            if !stability.stable {
                return Err(SimError::UnstableTruth {
                    output: m,
                    magnitude: stability.max_root_magnitude,
                });
            }
        }
        Ok(())
    }
}

/// Samples the scenario's events for one input channel onto the grid.
fn sample_inputs(
    cfg: &LinearTruthConfig,
    sc: &ScenarioConfig,
    n: usize,
) -> Result<DMatrix<f64>, SimError> {
    let h = sc.sample_period_s;
    let mut u = DMatrix::zeros(n, cfg.input_names.len());
    for (e_idx, event) in sc.events.iter().enumerate() {
        let j = cfg
            .input_names
            .iter()
            .position(|name| *name == event.channel)
            .ok_or_else(|| SimError::UnknownEventChannel { channel: event.channel.clone() })?;
        let start = (snap_to_grid(event.at_s, h) / h).round() as usize;
        match event.shape {
            EventShape::Step { delta } => {
                for t in start.min(n)..n {
                    u[(t, j)] += delta;
                }
            }
            EventShape::Pulse { delta, duration_s } => {
                if !(duration_s > 0.0) {
                    return Err(SimError::InvalidScenario {
                        reason: format!("pulse duration {duration_s} must be positive"),
                    });
                }
                let stop = (snap_to_grid(event.at_s + duration_s, h) / h).round() as usize;
                for t in start.min(n)..stop.min(n) {
                    u[(t, j)] += delta;
                }
            }
            EventShape::DampedSine { amplitude, decay_per_s, frequency_hz } => {
                let omega = 2.0 * std::f64::consts::PI * frequency_hz;
                for t in start.min(n)..n {
                    let dt = (t - start) as f64 * h;
                    u[(t, j)] += amplitude * (-decay_per_s * dt).exp() * (omega * dt).sin();
                }
            }
            EventShape::Prbs { amplitude, bit_period_samples } => {
                if bit_period_samples == 0 {
                    return Err(SimError::InvalidScenario {
                        reason: "PRBS bit period must be at least 1 sample".into(),
                    });
                }
                let mut rng = stream_rng(sc.rng_seed, 1 + e_idx as u64);
                let mut bit = if rng.random::<bool>() { amplitude } else { -amplitude };
                for t in start.min(n)..n {
                    if (t - start) % bit_period_samples == 0 && t != start {
                        bit = if rng.random::<bool>() { amplitude } else { -amplitude };
                    }
                    u[(t, j)] += bit;
                }
            }
        }
    }
    Ok(u)
}

pub(crate) fn simulate_linear_truth(
    cfg: &LinearTruthConfig,
    sc: &ScenarioConfig,
) -> Result<TimeSeriesDataset, SimError> {
    cfg.validate()?;
    let n = sc.rows();
    let orders = &cfg.orders;
    let n_out = cfg.output_names.len();
    let u = sample_inputs(cfg, sc, n)?;

    // Innovations, drawn row-major so generation order is reproducible.
    let mut e = DMatrix::zeros(n, n_out);
    if sc.noise_sigma > 0.0 {
        let mut rng = stream_rng(sc.rng_seed, 0);
        let normal = Normal::new(0.0, sc.noise_sigma).expect("sigma validated");
        for t in 0..n {
            for m in 0..n_out {
                e[(t, m)] = normal.sample(&mut rng);
            }
        }
    }

    let initial = |m: usize, back: usize| -> f64 {
        cfg.initial_outputs.get(m).and_then(|lags| lags.get(back - 1)).copied().unwrap_or(0.0)
    };

    let mut y = DMatrix::zeros(n, n_out);
    for t in 0..n {
        for (m, c) in cfg.outputs.iter().enumerate() {
            let mut acc = e[(t, m)];
            for i in 1..=orders.na {
                acc += c.ar[i - 1]
                    * if t >= i { y[(t - i, m)] } else { initial(m, i - t) };
            }
            for (j, exo) in c.exo.iter().enumerate() {
                for i in 1..=orders.nb {
                    let d = orders.nk + i;
                    if t >= d {
                        acc += exo[i - 1] * u[(t - d, j)];
                    }
                }
            }
            for i in 1..=orders.nc {
                if t >= i {
                    acc += c.ma[i - 1] * e[(t - i, m)];
                }
            }
            y[(t, m)] = acc;
        }
    }

    Ok(TimeSeriesDataset::new(
        sc.sample_period_s,
        0.0,
        cfg.input_names.clone(),
        cfg.output_names.clone(),
        u,
        y,
    )?)
}
