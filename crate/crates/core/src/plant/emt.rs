use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::armax::ar_stability;
use crate::timeseries::TimeSeriesDataset;

use super::scenario::{add_output_noise, ScenarioConfig};
use super::SimError;

/// A rectangular voltage-dip envelope on the point-on-wave grid voltage.
///
/// The instantaneous voltage is `v(t) = env(t) * sin(2 pi f t)` where the
/// envelope holds `v_pre_pu` before the dip, `v_dip_pu` for an integer number
/// of fundamental cycles, and `v_post_pu` afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DipScenario {
    pub v_pre_pu: f64,
    pub v_dip_pu: f64,
    pub v_post_pu: f64,
    /// Dip length in fundamental cycles.
    pub dip_cycles: u32,
    /// Dip onset in seconds.
    pub dip_start_s: f64,
    pub fundamental_hz: f64,
}

impl Default for DipScenario {
    fn default() -> Self {
        Self {
            v_pre_pu: 1.0,
            v_dip_pu: 0.5,
            v_post_pu: 1.0,
            dip_cycles: 6,
            dip_start_s: 0.1,
            fundamental_hz: 60.0,
        }
    }
}

impl DipScenario {
    fn validate(&self) -> Result<(), SimError> {
        for (name, v) in [
            ("v_pre_pu", self.v_pre_pu),
            ("v_dip_pu", self.v_dip_pu),
            ("v_post_pu", self.v_post_pu),
        ] {
            if !(v > 0.0 && v <= 1.5) {
                return Err(SimError::InvalidScenario {
                    reason: format!("{name} = {v} must lie in (0, 1.5]"),
                });
            }
        }
        if self.dip_cycles == 0 {
            return Err(SimError::InvalidScenario {
                reason: "dip must last at least one cycle".into(),
            });
        }
        if !(self.dip_start_s >= 0.0) {
            return Err(SimError::InvalidScenario {
                reason: format!("dip start {} must be non-negative", self.dip_start_s),
            });
        }
        if !(self.fundamental_hz > 0.0) {
            return Err(SimError::InvalidScenario {
                reason: format!("fundamental {} Hz must be positive", self.fundamental_hz),
            });
        }
        Ok(())
    }

    /// Envelope value at sample `r` of a grid with period `h`.
    fn envelope(&self, r: usize, h: f64) -> f64 {
        let start = (self.dip_start_s / h).round() as usize;
        let len = ((self.dip_cycles as f64 / self.fundamental_hz) / h).round() as usize;
        if r < start {
            self.v_pre_pu
        } else if r < start + len {
            self.v_dip_pu
        } else {
            self.v_post_pu
        }
    }
}

/// A linear discrete-time load: current responds to voltage through
///
/// ```text
/// i(t) = sum_k b[k] v(t-k) - sum_k a[k] i(t-k-1-ish)  (k starting at 1)
/// ```
///
/// i.e. the standard IIR difference equation with numerator `b[0..=nb]`
/// (applied to `v(t)` onward) and denominator `1, a[1..=na]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadModel {
    pub name: String,
    /// Numerator taps `b[0], b[1], ...` applied to `v(t), v(t-1), ...`.
    pub b: Vec<f64>,
    /// Denominator taps `a[1], a[2], ...` applied to `i(t-1), i(t-2), ...`.
    pub a: Vec<f64>,
}

/// Maximum filter order accepted for a load model.
pub(crate) const MAX_LOAD_ORDER: usize = 8;

impl LoadModel {
    /// Filter order: deepest lag on either side.
    pub fn order(&self) -> usize {
        self.a.len().max(self.b.len().saturating_sub(1))
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.b.is_empty() {
            return Err(SimError::InvalidScenario {
                reason: format!("load `{}` has no numerator taps", self.name),
            });
        }
        if self.order() > MAX_LOAD_ORDER {
            return Err(SimError::InvalidScenario {
                reason: format!(
                    "load `{}` has order {}, maximum is {MAX_LOAD_ORDER}",
                    self.name,
                    self.order()
                ),
            });
        }
        // Poles of 1 + a1 z^-1 + ... are roots of z^K + a1 z^(K-1) + ...,
        // which is the AR stability problem with alpha_k = -a_k.
        let neg_a: Vec<f64> = self.a.iter().map(|&v| -v).collect();
        let stability = ar_stability(&neg_a);
        if !stability.stable {
            return Err(SimError::UnstableLoad {
                name: self.name.clone(),
                magnitude: stability.max_root_magnitude,
            });
        }
        Ok(())
    }

    /// Complex gain at angular frequency `w` (radians per sample).
    pub fn gain_at(&self, w: f64) -> f64 {
        let z = |k: usize| Complex::from_polar(1.0, -(k as f64) * w);
        let num: Complex<f64> =
            self.b.iter().enumerate().map(|(k, &bk)| bk * z(k)).sum();
        let den: Complex<f64> = Complex::new(1.0, 0.0)
            + self.a.iter().enumerate().map(|(k, &ak)| ak * z(k + 1)).sum::<Complex<f64>>();
        (num / den).norm()
    }

    /// Runs the filter over a voltage series from zero initial state.
    fn run(&self, v: &[f64]) -> Vec<f64> {
        let mut i = vec![0.0; v.len()];
        for t in 0..v.len() {
            let mut acc = 0.0;
            for (k, &bk) in self.b.iter().enumerate() {
                if t >= k {
                    acc += bk * v[t - k];
                }
            }
            for (k, &ak) in self.a.iter().enumerate() {
                if t >= k + 1 {
                    acc -= ak * i[t - k - 1];
                }
            }
            i[t] = acc;
        }
        i
    }
}

/// Bilinear-transform discretization of a continuous first-order section
/// `gain / (1 + s tau)` at sample rate `fs`.
fn first_order_lag(gain: f64, tau: f64, fs: f64) -> (Vec<f64>, Vec<f64>) {
    let c = 2.0 * fs * tau;
    let b = vec![gain / (1.0 + c), gain / (1.0 + c)];
    let a = vec![(1.0 - c) / (1.0 + c)];
    (b, a)
}

/// The default residential load bank, designed at sample rate `fs`:
///
/// * `hvac` — an R-L branch (compressor motor): inductive, roughly 40 degrees
///   of current lag at the fundamental.
/// * `pv` — rooftop photovoltaics seen from the grid: power *injection*, so
///   a negative gain, with a fast inverter-filter lag.
/// * `ev` — an EV charger front-end with a lightly damped LC resonance near
///   300 Hz.
pub fn residential_loads(fs: f64) -> Vec<LoadModel> {
    let w60 = 2.0 * std::f64::consts::PI * 60.0;

    // Series R-L with tan(40 deg) = w L / R at 60 Hz, R = 1 p.u.
    let l = (40.0_f64.to_radians()).tan() / w60;
    let c = 2.0 * fs * l;
    let hvac = LoadModel {
        name: "hvac".into(),
        b: vec![1.0 / (1.0 + c), 1.0 / (1.0 + c)],
        a: vec![(1.0 - c) / (1.0 + c)],
    };

    let (b, a) = first_order_lag(-0.8, 1e-3, fs);
    let pv = LoadModel { name: "pv".into(), b, a };

    // Resonant pair at 300 Hz with radius 0.97, gain trimmed to 0.6 at the
    // fundamental.
    let theta = 2.0 * std::f64::consts::PI * 300.0 / fs;
    let r = 0.97;
    let mut ev = LoadModel {
        name: "ev".into(),
        b: vec![1.0, 0.0, -0.9],
        a: vec![-2.0 * r * theta.cos(), r * r],
    };
    let trim = 0.6 / ev.gain_at(w60 / fs);
    for tap in &mut ev.b {
        *tap *= trim;
    }

    let bank = vec![hvac, pv, ev];
    for load in &bank {
        load.validate().expect("designed load bank must be stable");
    }
    bank
}

/// EMT voltage-dip scenario: the dip descriptor plus the load bank whose
/// currents are recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmtDipConfig {
    pub dip: DipScenario,
    /// Load models; when empty, the residential bank designed at the
    /// scenario's sample rate is used.
    pub loads: Vec<LoadModel>,
}

impl Default for EmtDipConfig {
    fn default() -> Self {
        Self { dip: DipScenario::default(), loads: Vec::new() }
    }
}

pub(crate) fn simulate_emt_dip(
    cfg: &EmtDipConfig,
    sc: &ScenarioConfig,
) -> Result<TimeSeriesDataset, SimError> {
    cfg.dip.validate()?;
    if !sc.events.is_empty() {
        return Err(SimError::UnsupportedEvent {
            reason: "EMT dip scenarios define their disturbance via the dip descriptor".into(),
        });
    }
    let loads = if cfg.loads.is_empty() {
        residential_loads(1.0 / sc.sample_period_s)
    } else {
        cfg.loads.clone()
    };
    for load in &loads {
        load.validate()?;
    }

    let h = sc.sample_period_s;
    let n = sc.rows();
    let omega = 2.0 * std::f64::consts::PI * cfg.dip.fundamental_hz;
    let v: Vec<f64> =
        (0..n).map(|r| cfg.dip.envelope(r, h) * (omega * (r as f64 * h)).sin()).collect();

    let mut inputs = DMatrix::zeros(n, 1);
    for (r, &value) in v.iter().enumerate() {
        inputs[(r, 0)] = value;
    }
    let mut outputs = DMatrix::zeros(n, loads.len());
    let mut output_names = Vec::with_capacity(loads.len());
    for (c, load) in loads.iter().enumerate() {
        let i = load.run(&v);
        for (r, &value) in i.iter().enumerate() {
            outputs[(r, c)] = value;
        }
        output_names.push(format!("i_{}", load.name));
    }
    add_output_noise(&mut outputs, sc.noise_sigma, sc.rng_seed);

    Ok(TimeSeriesDataset::new(h, 0.0, vec!["v".into()], output_names, inputs, outputs)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::PlantKind;
    use approx::assert_abs_diff_eq;

    fn scenario(cfg: EmtDipConfig) -> ScenarioConfig {
        ScenarioConfig {
            name: "emt".into(),
            plant: PlantKind::EmtDip(cfg),
            events: vec![],
            duration_s: 0.5,
            sample_period_s: 2e-4,
            noise_sigma: 0.0,
            rng_seed: 1,
        }
    }

    /// RMS of one fundamental cycle starting at `start`, via Simpson's rule
    /// on the squared samples (the cycle spans a non-integer number of
    /// samples, so the last partial interval is handled by linear
    /// interpolation of the squared signal).
    fn cycle_rms(v: &[f64], start: usize, h: f64, f: f64) -> f64 {
        let span = 1.0 / f / h; // samples per cycle, not an integer
        let whole = span.floor() as usize;
        let frac = span - whole as f64;
        let sq: Vec<f64> = v[start..=start + whole + 1].iter().map(|x| x * x).collect();
        // Trapezoid over the uniform part, refined by Simpson pairs.
        let mut integral = 0.0;
        let mut k = 0;
        while k + 2 <= whole {
            integral += (sq[k] + 4.0 * sq[k + 1] + sq[k + 2]) / 3.0;
            k += 2;
        }
        if k + 1 <= whole {
            integral += (sq[k] + sq[k + 1]) / 2.0;
        }
        // Partial tail interval of width `frac`, squared signal interpolated
        // linearly to the cycle boundary.
        let sq_end = sq[whole] + (sq[whole + 1] - sq[whole]) * frac;
        integral += frac * (sq[whole] + sq_end) / 2.0;
        (integral / span).sqrt()
    }

    #[test]
    fn dip_envelope_scales_the_per_cycle_rms() {
        let cfg = EmtDipConfig::default();
        let data = simulate_emt_dip(&cfg, &scenario(cfg.clone())).unwrap();
        let v = data.input_column(0);
        let h = 2e-4;
        // Pre-dip cycle: RMS of a 1.0 p.u. sine is 1/sqrt(2).
        let pre = cycle_rms(&v, 0, h, 60.0);
        assert_abs_diff_eq!(pre, 1.0 / 2.0_f64.sqrt(), epsilon = 1e-3);
        // Mid-dip: envelope 0.5.
        let mid_start = (0.1 / h).round() as usize + 84;
        let mid = cycle_rms(&v, mid_start, h, 60.0);
        assert_abs_diff_eq!(mid, 0.5 / 2.0_f64.sqrt(), epsilon = 1e-3);
    }

    #[test]
    fn dip_length_is_an_integer_number_of_cycles() {
        let cfg = EmtDipConfig::default();
        let data = simulate_emt_dip(&cfg, &scenario(cfg.clone())).unwrap();
        let v = data.input_column(0);
        let h: f64 = 2e-4;
        let start = (0.1 / h).round() as usize;
        let len = ((6.0 / 60.0) / h).round() as usize;
        // Just before the dip the envelope is 1.0; inside it is 0.5; after,
        // back to 1.0 (default post level). Compare against the raw sine.
        for (r, expected_env) in
            [(start - 1, 1.0), (start, 0.5), (start + len - 1, 0.5), (start + len, 1.0)]
        {
            let t = r as f64 * h;
            let raw = (2.0 * std::f64::consts::PI * 60.0 * t).sin();
            assert_abs_diff_eq!(v[r], expected_env * raw, epsilon = 1e-12);
        }
    }

    #[test]
    fn residential_bank_matches_its_design_targets() {
        let fs = 5000.0;
        let loads = residential_loads(fs);
        assert_eq!(loads.len(), 3);
        let w60 = 2.0 * std::f64::consts::PI * 60.0 / fs;
        // HVAC: |1/(R + jwL)| with tan(40 deg) reactance ratio at 60 Hz.
        let expected_hvac = 1.0 / (1.0 + (40.0_f64.to_radians()).tan().powi(2)).sqrt();
        assert_abs_diff_eq!(loads[0].gain_at(w60), expected_hvac, epsilon = 2e-3);
        // PV: 0.8 through a 1 ms lag.
        let expected_pv = 0.8 / (1.0 + (2.0 * std::f64::consts::PI * 60.0 * 1e-3).powi(2)).sqrt();
        assert_abs_diff_eq!(loads[1].gain_at(w60), expected_pv, epsilon = 2e-3);
        // EV: trimmed to 0.6 exactly.
        assert_abs_diff_eq!(loads[2].gain_at(w60), 0.6, epsilon = 1e-12);
        // All orders within the cap, all stable (validate() in the
        // constructor would have panicked otherwise).
        for load in &loads {
            assert!(load.order() <= MAX_LOAD_ORDER);
        }
    }

    #[test]
    fn steady_sine_current_amplitude_matches_filter_gain() {
        // Drive long enough to pass the transient, then compare the current
        // amplitude against |H| at the fundamental.
        let cfg = EmtDipConfig {
            dip: DipScenario { dip_start_s: 10.0, ..DipScenario::default() },
            loads: Vec::new(),
        };
        let data = simulate_emt_dip(&cfg, &scenario(cfg.clone())).unwrap();
        let fs = 5000.0;
        let w60 = 2.0 * std::f64::consts::PI * 60.0 / fs;
        let loads = residential_loads(fs);
        for (c, load) in loads.iter().enumerate() {
            let i = data.output_column(c);
            let tail = &i[i.len() - 84..];
            let amplitude = tail.iter().fold(0.0_f64, |acc, &x| acc.max(x.abs()));
            assert_abs_diff_eq!(amplitude, load.gain_at(w60), epsilon = 0.02);
        }
    }

    #[test]
    fn unstable_load_is_rejected() {
        let cfg = EmtDipConfig {
            dip: DipScenario::default(),
            loads: vec![LoadModel { name: "bad".into(), b: vec![1.0], a: vec![-1.5] }],
        };
        let err = simulate_emt_dip(&cfg, &scenario(cfg.clone())).unwrap_err();
        assert!(matches!(err, SimError::UnstableLoad { name, .. } if name == "bad"));
    }

    #[test]
    fn overlong_load_order_is_rejected() {
        let cfg = EmtDipConfig {
            dip: DipScenario::default(),
            loads: vec![LoadModel { name: "long".into(), b: vec![0.1; 10], a: vec![0.0; 9] }],
        };
        assert!(simulate_emt_dip(&cfg, &scenario(cfg.clone())).is_err());
    }

    #[test]
    fn out_of_range_voltages_are_rejected() {
        for (pre, dip) in [(0.0, 0.5), (1.0, 1.6), (1.0, 0.0)] {
            let cfg = EmtDipConfig {
                dip: DipScenario { v_pre_pu: pre, v_dip_pu: dip, ..DipScenario::default() },
                loads: Vec::new(),
            };
            assert!(simulate_emt_dip(&cfg, &scenario(cfg.clone())).is_err());
        }
    }

    #[test]
    fn events_are_not_accepted_by_the_emt_plant() {
        let cfg = EmtDipConfig::default();
        let mut sc = scenario(cfg.clone());
        sc.events.push(crate::plant::Event::step(0.1, "v", 0.1));
        assert!(matches!(
            simulate_emt_dip(&cfg, &sc),
            Err(SimError::UnsupportedEvent { .. })
        ));
    }
}
