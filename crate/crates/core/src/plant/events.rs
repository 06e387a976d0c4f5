use serde::{Deserialize, Serialize};

use super::SimError;

/// Disturbance shapes that can be injected on a plant input channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum EventShape {
    /// Permanent offset of `delta` from the event time onward.
    Step { delta: f64 },
    /// Offset of `delta` held for `duration_s`, then removed.
    Pulse { delta: f64, duration_s: f64 },
    /// `amplitude * exp(-decay * dt) * sin(2 pi frequency_hz * dt)` from the
    /// event time onward: the canonical inter-area oscillation shape.
    DampedSine { amplitude: f64, decay_per_s: f64, frequency_hz: f64 },
    /// Pseudo-random binary sequence: `+/- amplitude`, re-drawn every
    /// `bit_period_samples`, from the event time to the end of the scenario.
    /// Only discrete-time plants accept it.
    Prbs { amplitude: f64, bit_period_samples: usize },
}

/// One disturbance: where, when, and what.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Onset time in seconds; snapped to the sample grid by the simulator.
    pub at_s: f64,
    /// Input channel the disturbance applies to.
    pub channel: String,
    #[serde(flatten)]
    pub shape: EventShape,
}

impl Event {
    pub fn step(at_s: f64, channel: &str, delta: f64) -> Self {
        Self { at_s, channel: channel.into(), shape: EventShape::Step { delta } }
    }

    pub fn pulse(at_s: f64, channel: &str, delta: f64, duration_s: f64) -> Self {
        Self { at_s, channel: channel.into(), shape: EventShape::Pulse { delta, duration_s } }
    }

    pub fn damped_sine(
        at_s: f64,
        channel: &str,
        amplitude: f64,
        decay_per_s: f64,
        frequency_hz: f64,
    ) -> Self {
        Self {
            at_s,
            channel: channel.into(),
            shape: EventShape::DampedSine { amplitude, decay_per_s, frequency_hz },
        }
    }

    pub fn prbs(at_s: f64, channel: &str, amplitude: f64, bit_period_samples: usize) -> Self {
        Self {
            at_s,
            channel: channel.into(),
            shape: EventShape::Prbs { amplitude, bit_period_samples },
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        if !(self.at_s.is_finite() && self.at_s >= 0.0) {
            return Err(SimError::InvalidScenario {
                reason: format!("event time {} must be finite and non-negative", self.at_s),
            });
        }
        match self.shape {
            EventShape::Pulse { duration_s, .. } if !(duration_s > 0.0) => {
                Err(SimError::InvalidScenario {
                    reason: format!("pulse duration {duration_s} must be positive"),
                })
            }
            EventShape::DampedSine { decay_per_s, frequency_hz, .. }
                if decay_per_s < 0.0 || frequency_hz <= 0.0 =>
            {
                Err(SimError::InvalidScenario {
                    reason: "damped sine needs decay >= 0 and frequency > 0".into(),
                })
            }
            EventShape::Prbs { bit_period_samples, .. } if bit_period_samples == 0 => {
                Err(SimError::InvalidScenario {
                    reason: "PRBS bit period must be at least 1 sample".into(),
                })
            }
            _ => Ok(()),
        }
    }
}

/// A continuous-time input channel built from a base value plus snapped
/// events, evaluatable at any instant.
///
/// The `open` flag selects the one-sided limit at event boundaries: closed
/// evaluation (`open = false`) treats an event starting exactly at `tau` as
/// already active (right-continuous), open evaluation treats it as not yet
/// active (left limit). The integrator evaluates its final stage open so each
/// step integrates a function that is smooth on its whole interval.
#[derive(Debug, Clone)]
pub(crate) struct Waveform {
    base: f64,
    /// `(onset, delta)`; pulses contribute two entries of opposite sign.
    steps: Vec<(f64, f64)>,
    /// `(onset, amplitude, decay, angular_frequency)`.
    sines: Vec<(f64, f64, f64, f64)>,
}

impl Waveform {
    pub(crate) fn value(&self, tau: f64, open: bool) -> f64 {
        let mut v = self.base;
        for &(on, delta) in &self.steps {
            let active = if open { tau > on } else { tau >= on };
            if active {
                v += delta;
            }
        }
        for &(on, amplitude, decay, omega) in &self.sines {
            let active = if open { tau > on } else { tau >= on };
            if active {
                let dt = tau - on;
                v += amplitude * (-decay * dt).exp() * (omega * dt).sin();
            }
        }
        v
    }
}

/// Snaps an instant onto the sample grid.
pub(crate) fn snap_to_grid(t: f64, sample_period: f64) -> f64 {
    (t / sample_period).round() * sample_period
}

/// Builds one waveform per named channel from the event list, for plants
/// with continuous-time inputs. PRBS events are rejected here: they are
/// defined per sample, not per instant.
pub(crate) fn build_waveforms(
    channels: &[(&str, f64)],
    events: &[Event],
    sample_period: f64,
) -> Result<Vec<Waveform>, SimError> {
    let mut waveforms: Vec<Waveform> = channels
        .iter()
        .map(|&(_, base)| Waveform { base, steps: Vec::new(), sines: Vec::new() })
        .collect();
    for event in events {
        event.validate()?;
        let idx = channels
            .iter()
            .position(|&(name, _)| name == event.channel)
            .ok_or_else(|| SimError::UnknownEventChannel { channel: event.channel.clone() })?;
        let on = snap_to_grid(event.at_s, sample_period);
        match event.shape {
            EventShape::Step { delta } => waveforms[idx].steps.push((on, delta)),
            EventShape::Pulse { delta, duration_s } => {
                let off = snap_to_grid(event.at_s + duration_s, sample_period);
                waveforms[idx].steps.push((on, delta));
                waveforms[idx].steps.push((off, -delta));
            }
            EventShape::DampedSine { amplitude, decay_per_s, frequency_hz } => {
                waveforms[idx].sines.push((
                    on,
                    amplitude,
                    decay_per_s,
                    2.0 * std::f64::consts::PI * frequency_hz,
                ));
            }
            EventShape::Prbs { .. } => {
                return Err(SimError::UnsupportedEvent {
                    reason: format!(
                        "PRBS on `{}` requires a discrete-time plant",
                        event.channel
                    ),
                });
            }
        }
    }
    Ok(waveforms)
}
