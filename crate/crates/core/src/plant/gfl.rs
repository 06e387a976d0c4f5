use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::timeseries::TimeSeriesDataset;

use super::events::build_waveforms;
use super::rk4::rk4_step;
use super::scenario::{add_output_noise, ScenarioConfig};
use super::{SimError, VOLTAGE_COLLAPSE_FLOOR};

/// Grid-following inverter (phasor domain): an SRF-PLL tracks the grid angle
/// while first-order current loops chase the power references.
///
/// States are the PLL angle error `delta` (rad), the PLL integrator `x_i`
/// (rad/s), and the dq currents `i_d`, `i_q` (p.u.):
///
/// ```text
/// d delta / dt = 2 pi (f_grid - f0) - (k_p V sin(delta) + x_i)
/// d x_i   / dt = k_i V sin(delta)
/// d i_d   / dt = (p_ref / V - i_d) / T_i
/// d i_q   / dt = (-q_ref / V - i_q) / T_i
/// ```
///
/// Injected powers at the terminal follow from the current vector expressed
/// in the grid frame:
///
/// ```text
/// P =  V (i_d cos(delta) - i_q sin(delta))
/// Q = -V (i_q cos(delta) + i_d sin(delta))
/// ```
///
/// Inputs are the grid voltage `V` (p.u.) and frequency `f` (Hz); outputs are
/// the injected powers `P` and `Q` (p.u.). A terminal voltage at or below
/// 0.1 p.u. aborts with [`SimError::VoltageCollapse`]: below that the PLL
/// has nothing left to synchronize to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GflConfig {
    /// PLL proportional gain (per second per p.u.).
    pub pll_kp: f64,
    /// PLL integral gain (per second squared per p.u.).
    pub pll_ki: f64,
    /// Current loop time constant in seconds.
    pub current_loop_time_s: f64,
    /// Nominal grid frequency in Hz.
    pub f0_hz: f64,
    /// Nominal grid voltage in p.u.
    pub v0_pu: f64,
    /// Active power reference in p.u.
    pub p_ref_pu: f64,
    /// Reactive power reference in p.u.
    pub q_ref_pu: f64,
    /// Integrator sub-steps per sample period.
    pub substeps: usize,
}

impl Default for GflConfig {
    fn default() -> Self {
        Self {
            pll_kp: 50.0,
            pll_ki: 900.0,
            current_loop_time_s: 0.01,
            f0_hz: 60.0,
            v0_pu: 1.0,
            p_ref_pu: 0.5,
            q_ref_pu: 0.1,
            substeps: 1,
        }
    }
}

impl GflConfig {
    fn validate(&self) -> Result<(), SimError> {
        if !(self.current_loop_time_s > 0.0) {
            return Err(SimError::InvalidScenario {
                reason: format!(
                    "current loop time constant {} must be positive",
                    self.current_loop_time_s
                ),
            });
        }
        if self.pll_kp < 0.0 || self.pll_ki <= 0.0 {
            return Err(SimError::InvalidScenario {
                reason: "PLL gains must satisfy k_p >= 0 and k_i > 0".into(),
            });
        }
        if self.v0_pu <= VOLTAGE_COLLAPSE_FLOOR {
            return Err(SimError::InvalidScenario {
                reason: format!(
                    "nominal voltage {} p.u. is at or below the collapse floor",
                    self.v0_pu
                ),
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

pub(crate) fn simulate_gfl(
    cfg: &GflConfig,
    sc: &ScenarioConfig,
) -> Result<TimeSeriesDataset, SimError> {
    cfg.validate()?;
    let h = sc.sample_period_s;
    let n = sc.rows();
    let waves = build_waveforms(&[("V", cfg.v0_pu), ("f", cfg.f0_hz)], &sc.events, h)?;

    let two_pi = 2.0 * std::f64::consts::PI;
    let v0 = waves[0].value(0.0, false);
    if v0 <= VOLTAGE_COLLAPSE_FLOOR {
        return Err(SimError::VoltageCollapse { t: 0.0, v: v0 });
    }

    // Start locked and in steady state: delta = 0, the PLL integrator holds
    // the initial frequency offset, and the currents sit at their targets.
    let mut state = [
        0.0,
        two_pi * (waves[1].value(0.0, false) - cfg.f0_hz),
        cfg.p_ref_pu / v0,
        -cfg.q_ref_pu / v0,
    ];

    let mut inputs = DMatrix::zeros(n, 2);
    let mut outputs = DMatrix::zeros(n, 2);
    let t_i_inv = 1.0 / cfg.current_loop_time_s;
    let sub_h = h / cfg.substeps as f64;

    let mut collapse: Option<(f64, f64)> = None;
    for r in 0..n {
        let t = r as f64 * h;
        let v_now = waves[0].value(t, false);
        if v_now <= VOLTAGE_COLLAPSE_FLOOR {
            return Err(SimError::VoltageCollapse { t, v: v_now });
        }
        inputs[(r, 0)] = v_now;
        inputs[(r, 1)] = waves[1].value(t, false);
        let (sin_d, cos_d) = state[0].sin_cos();
        outputs[(r, 0)] = v_now * (state[2] * cos_d - state[3] * sin_d);
        outputs[(r, 1)] = -v_now * (state[3] * cos_d + state[2] * sin_d);

        if r + 1 < n {
            for s in 0..cfg.substeps {
                let t_sub = t + s as f64 * sub_h;
                state = rk4_step(t_sub, sub_h, &state, |tau, x, open| {
                    let v = waves[0].value(tau, open);
                    if v <= VOLTAGE_COLLAPSE_FLOOR {
                        if collapse.is_none() {
                            collapse = Some((tau, v));
                        }
                        return [0.0; 4];
                    }
                    let f_grid = waves[1].value(tau, open);
                    let sin_d = x[0].sin();
                    [
                        two_pi * (f_grid - cfg.f0_hz) - (cfg.pll_kp * v * sin_d + x[1]),
                        cfg.pll_ki * v * sin_d,
                        (cfg.p_ref_pu / v - x[2]) * t_i_inv,
                        (-cfg.q_ref_pu / v - x[3]) * t_i_inv,
                    ]
                });
                if let Some((tc, vc)) = collapse {
                    return Err(SimError::VoltageCollapse { t: tc, v: vc });
                }
            }
        }
    }
    add_output_noise(&mut outputs, sc.noise_sigma, sc.rng_seed);

    Ok(TimeSeriesDataset::new(
        h,
        0.0,
        vec!["V".into(), "f".into()],
        vec!["P".into(), "Q".into()],
        inputs,
        outputs,
    )?)
}
