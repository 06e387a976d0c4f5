use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::emt::DipScenario;
use super::events::Event;
use super::scenario::{PlantKind, ScenarioConfig};
use super::SimError;

/// Canonical dip envelopes `(v_pre, v_dip, cycles, v_post)` used for the
/// first scenarios of every EMT suite, so that suites of any size share a
/// reproducible benchmark core.
pub(crate) const CANONICAL_DIPS: [(f64, f64, u32, f64); 4] = [
    (1.0, 0.6, 6, 1.0),
    (1.0, 0.5, 10, 1.0),
    (1.0, 0.5, 10, 0.8),
    (1.0, 0.5, 6, 0.8),
];

/// Derives a suite of `count` scenarios from a base configuration by
/// re-randomizing the disturbance of each copy.
///
/// The base scenario's plant parameters, duration, sample period, and noise
/// level are kept; per-scenario events and the simulation seed are drawn from
/// a generator seeded with `seed`. Draws are sequential, so two suites with
/// the same seed share their common prefix: extending `count` never changes
/// the scenarios that were already generated.
///
/// Disturbance families per plant:
///
/// * grid-forming: reference steps on `P` and `Q`, sometimes with an extra
///   damped power oscillation;
/// * grid-following: a damped frequency swing and a small voltage step;
/// * linear truth: one PRBS dither per input channel;
/// * EMT dip: the canonical envelope table first, randomized dips after.
pub fn generate_event_suite(
    base: &ScenarioConfig,
    count: usize,
    seed: u64,
) -> Result<Vec<ScenarioConfig>, SimError> {
    if count < 2 {
        return Err(SimError::SuiteTooSmall { requested: count });
    }
    base.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut suite = Vec::with_capacity(count);
    for i in 0..count {
        let mut sc = base.clone();
        sc.name = format!("{}-{i:03}", base.name);
        sc.rng_seed = rng.random::<u64>();
        randomize_disturbance(&mut sc, i, &mut rng);
        sc.validate()?;
        suite.push(sc);
    }
    Ok(suite)
}

fn randomize_disturbance(sc: &mut ScenarioConfig, index: usize, rng: &mut ChaCha8Rng) {
    let span = sc.duration_s;
    match &mut sc.plant {
        PlantKind::Gfm(_) => {
            let mut events = vec![
                Event::step(rng.random_range(0.1..=0.4) * span, "P", signed(rng, 0.02, 0.2)),
                Event::step(rng.random_range(0.5..=0.8) * span, "Q", signed(rng, 0.02, 0.2)),
            ];
            if rng.random_bool(0.5) {
                events.push(Event::damped_sine(
                    rng.random_range(0.1..=0.6) * span,
                    "P",
                    rng.random_range(0.01..=0.05),
                    rng.random_range(1.0..=5.0),
                    rng.random_range(0.5..=2.0),
                ));
            }
            sc.events = events;
        }
        PlantKind::Gfl(_) => {
            // Both terminal inputs are exercised in every member: a record
            // with a flat voltage profile would leave the voltage
            // coefficients of a model trained on it unidentifiable.
            sc.events = vec![
                Event::damped_sine(
                    rng.random_range(0.1..=0.4) * span,
                    "f",
                    rng.random_range(0.05..=0.5),
                    rng.random_range(0.3..=1.0),
                    rng.random_range(0.3..=1.5),
                ),
                Event::step(rng.random_range(0.5..=0.8) * span, "V", signed(rng, 0.01, 0.05)),
            ];
        }
        PlantKind::LinearTruth(cfg) => {
            sc.events = cfg
                .input_names
                .iter()
                .map(|name| {
                    Event::prbs(
                        0.0,
                        name,
                        rng.random_range(0.5..=1.5),
                        rng.random_range(1..=4usize),
                    )
                })
                .collect();
        }
        PlantKind::EmtDip(cfg) => {
            let (pre, dip, cycles, post) = if index < CANONICAL_DIPS.len() {
                CANONICAL_DIPS[index]
            } else {
                (
                    1.0,
                    rng.random_range(0.3..=0.9),
                    rng.random_range(3..=12u32),
                    rng.random_range(0.8..=1.0),
                )
            };
            cfg.dip = DipScenario {
                v_pre_pu: pre,
                v_dip_pu: dip,
                v_post_pu: post,
                dip_cycles: cycles,
                ..cfg.dip.clone()
            };
            sc.events = Vec::new();
        }
    }
}

/// Magnitude in `[lo, hi]` with a random sign.
fn signed(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let magnitude = rng.random_range(lo..=hi);
    if rng.random_bool(0.5) {
        magnitude
    } else {
        -magnitude
    }
}
