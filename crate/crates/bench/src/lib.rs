//! Shared fixtures for the pipeline benchmarks: deterministic scenarios and
//! pre-fitted models, sized so one benchmark iteration stays in the
//! millisecond range.

use ibrtwin_core::{
    fit_batch_els, simulate, ArmaxModel, ArmaxOrders, Event, FitConfig, LinearTruthConfig,
    OutputCoeffs, PlantKind, ScenarioConfig, TimeSeriesDataset, EMT_SAMPLE_PERIOD_S,
    PHASOR_SAMPLE_PERIOD_S,
};

/// A second-order single-channel plant with known coefficients, driven by a
/// per-sample PRBS dither.
pub fn truth_scenario(rows: usize, seed: u64) -> ScenarioConfig {
    let orders = ArmaxOrders { na: 2, nb: 2, nc: 1, nk: 0 };
    let plant = LinearTruthConfig {
        orders,
        outputs: vec![OutputCoeffs {
            ar: vec![1.5, -0.7],
            exo: vec![vec![1.0, 0.5]],
            ma: vec![0.3],
        }],
        input_names: vec!["u".into()],
        output_names: vec!["y".into()],
        initial_outputs: Vec::new(),
    };
    ScenarioConfig {
        name: "bench-truth".into(),
        plant: PlantKind::LinearTruth(plant),
        events: vec![Event::prbs(0.0, "u", 1.0, 1)],
        duration_s: rows as f64 * PHASOR_SAMPLE_PERIOD_S,
        sample_period_s: PHASOR_SAMPLE_PERIOD_S,
        noise_sigma: 0.01,
        rng_seed: seed,
    }
}

/// A grid-forming inverter scenario with reference steps on both inputs.
pub fn gfm_scenario(duration_s: f64, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        name: "bench-gfm".into(),
        plant: PlantKind::Gfm(Default::default()),
        events: vec![
            Event::step(0.15 * duration_s, "P", 0.1),
            Event::step(0.6 * duration_s, "Q", -0.08),
        ],
        duration_s,
        sample_period_s: PHASOR_SAMPLE_PERIOD_S,
        noise_sigma: 1e-4,
        rng_seed: seed,
    }
}

/// An EMT voltage-dip scenario at the native 5 kHz rate.
pub fn emt_scenario(duration_s: f64, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        name: "bench-emt".into(),
        plant: PlantKind::EmtDip(Default::default()),
        events: Vec::new(),
        duration_s,
        sample_period_s: EMT_SAMPLE_PERIOD_S,
        noise_sigma: 1e-3,
        rng_seed: seed,
    }
}

/// Simulates a scenario, panicking on configuration mistakes — benchmark
/// fixtures are static, so any failure is a bug in this crate.
pub fn dataset(sc: &ScenarioConfig) -> TimeSeriesDataset {
    simulate(sc).expect("benchmark scenario simulates")
}

/// Fits a model for the prediction and monitoring benchmarks.
pub fn fitted(data: &TimeSeriesDataset, orders: ArmaxOrders) -> ArmaxModel {
    fit_batch_els(data, &orders, &FitConfig::default()).expect("benchmark fit succeeds").0
}
