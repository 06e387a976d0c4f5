use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::timeseries::TimeSeriesDataset;

use super::events::build_waveforms;
use super::rk4::rk4_step;
use super::scenario::{add_output_noise, ScenarioConfig};
use super::SimError;

/// Droop-controlled grid-forming inverter (phasor domain).
///
/// Measured active and reactive power are low-pass filtered with time
/// constant `filter_time_s`; the filtered values set frequency and voltage
/// through the droop laws
///
/// ```text
/// f = f0 - droop_p * (P_f - p_ref)
/// V = v0 - droop_q * (Q_f - q_ref)
/// ```
///
/// Inputs are the drawn powers `P` and `Q` (p.u.); outputs are the terminal
/// voltage `V` (p.u.) and frequency `f` (Hz).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GfmConfig {
    /// Nominal frequency in Hz.
    pub f0_hz: f64,
    /// Nominal voltage in p.u.
    pub v0_pu: f64,
    /// Active-power droop gain in Hz per p.u.
    pub droop_p_hz_per_pu: f64,
    /// Reactive-power droop gain in p.u. voltage per p.u.
    pub droop_q_pu_per_pu: f64,
    /// Power measurement filter time constant in seconds.
    pub filter_time_s: f64,
    /// Active power setpoint in p.u.
    pub p_ref_pu: f64,
    /// Reactive power setpoint in p.u.
    pub q_ref_pu: f64,
    /// Integrator sub-steps per sample period (1 = integrate at the sampling
    /// rate; raise to check integration convergence).
    pub substeps: usize,
}

impl Default for GfmConfig {
    fn default() -> Self {
        Self {
            f0_hz: 60.0,
            v0_pu: 1.0,
            droop_p_hz_per_pu: 0.3,
            droop_q_pu_per_pu: 0.05,
            filter_time_s: 0.02,
            p_ref_pu: 0.5,
            q_ref_pu: 0.1,
            substeps: 1,
        }
    }
}

impl GfmConfig {
    fn validate(&self) -> Result<(), SimError> {
        if !(self.filter_time_s > 0.0) {
            return Err(SimError::InvalidScenario {
                reason: format!("filter time constant {} must be positive", self.filter_time_s),
            });
        }
        if self.substeps == 0 {
            return Err(SimError::InvalidScenario {
                reason: "substeps must be at least 1".into(),
            });
        }
        Ok(())
    }
}

pub(crate) fn simulate_gfm(
    cfg: &GfmConfig,
    sc: &ScenarioConfig,
) -> Result<TimeSeriesDataset, SimError> {
    cfg.validate()?;
    let h = sc.sample_period_s;
    let n = sc.rows();
    let waves = build_waveforms(
        &[("P", cfg.p_ref_pu), ("Q", cfg.q_ref_pu)],
        &sc.events,
        h,
    )?;

    let mut inputs = DMatrix::zeros(n, 2);
    let mut outputs = DMatrix::zeros(n, 2);

    // Start in steady state: the filters already hold the initial powers.
    let mut state = [waves[0].value(0.0, false), waves[1].value(0.0, false)];
    let tau_inv = 1.0 / cfg.filter_time_s;
    let sub_h = h / cfg.substeps as f64;
    for r in 0..n {
        let t = r as f64 * h;
        inputs[(r, 0)] = waves[0].value(t, false);
        inputs[(r, 1)] = waves[1].value(t, false);
        outputs[(r, 0)] = cfg.v0_pu - cfg.droop_q_pu_per_pu * (state[1] - cfg.q_ref_pu);
        outputs[(r, 1)] = cfg.f0_hz - cfg.droop_p_hz_per_pu * (state[0] - cfg.p_ref_pu);
        if r + 1 < n {
            for s in 0..cfg.substeps {
                let t_sub = t + s as f64 * sub_h;
                state = rk4_step(t_sub, sub_h, &state, |tau, x, open| {
                    [
                        (waves[0].value(tau, open) - x[0]) * tau_inv,
                        (waves[1].value(tau, open) - x[1]) * tau_inv,
                    ]
                });
            }
        }
    }
    add_output_noise(&mut outputs, sc.noise_sigma, sc.rng_seed);

    Ok(TimeSeriesDataset::new(
        h,
        0.0,
        vec!["P".into(), "Q".into()],
        vec!["V".into(), "f".into()],
        inputs,
        outputs,
    )?)
}
