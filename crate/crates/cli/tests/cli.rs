//! End-to-end tests of the `ibrtwin` binary: each case drives the compiled
//! executable over a temporary directory and checks artifacts, exit codes,
//! and console output.
//!
//! Hand-built ARX datasets keep the fixtures transparent: a first-order
//! plant `y(t) = a*y(t-1) + 0.8*u(t-1)` driven by a deterministic ±0.8
//! dither, written directly as CSV text. Zero process noise makes the
//! expected outcomes sharp (exact recovery, exactly one trigger, byte-stable
//! artifacts).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ibrtwin_core::ArmaxModel;
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ibrtwin")
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawning the ibrtwin binary")
}

fn assert_exit(out: &Output, code: i32, what: &str) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "{what}: expected exit {code}\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
}

fn read_json(path: &Path) -> Value {
    let text = fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("reading {}: {e}", path.display()));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("parsing {}: {e}", path.display()))
}

/// Deterministic ±1 dither bits from a 64-bit LCG.
struct Lcg(u64);

impl Lcg {
    fn sign(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        if self.0 >> 63 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// Rows of the noise-free plant `y(t) = a(t)*y(t-1) + 0.8*u(t-1)` with a
/// dither input; `a(t)` switches from `a0` to `a1` at `switch_at`.
fn arx_rows(n: usize, a0: f64, a1: f64, switch_at: usize, lcg_seed: u64) -> Vec<(f64, f64)> {
    let mut lcg = Lcg(lcg_seed);
    let mut rows = Vec::with_capacity(n);
    let mut y_prev = 0.0;
    let mut u_prev = 0.0;
    for t in 0..n {
        let a = if t < switch_at { a0 } else { a1 };
        let y = a * y_prev + 0.8 * u_prev;
        let u = 0.8 * lcg.sign();
        rows.push((u, y));
        y_prev = y;
        u_prev = u;
    }
    rows
}

/// Writes `(t, u, y)` rows as a dataset CSV.
fn write_arx_csv(path: &Path, rows: &[(f64, f64)]) {
    let mut text = String::from("t,u,y\n");
    for (t, (u, y)) in rows.iter().enumerate() {
        text.push_str(&format!("{},{u},{y}\n", t as f64 * 1e-3));
    }
    fs::write(path, text).expect("writing dataset CSV");
}

/// Writes a stream CSV whose output column goes empty from `blank_from` on.
fn write_stream_csv(path: &Path, rows: &[(f64, f64)], blank_from: usize) {
    let mut text = String::from("t,u,y\n");
    for (t, (u, y)) in rows.iter().enumerate() {
        if t < blank_from {
            text.push_str(&format!("{},{u},{y}\n", t as f64 * 1e-3));
        } else {
            text.push_str(&format!("{},{u},\n", t as f64 * 1e-3));
        }
    }
    fs::write(path, text).expect("writing stream CSV");
}

const ROLES: &str = r#"{ "inputs": ["u"], "outputs": ["y"] }"#;

/// Fit config for the hand-built ARX plant: raw units, no ridge, so the
/// recovered coefficients are directly comparable to the truth.
fn arx_fit_config(train: &str, nc: usize) -> String {
    format!(
        r#"{{
  "train": ["{train}"],
  "roles": {ROLES},
  "orders": {{ "na": 1, "nb": 1, "nc": {nc}, "nk": 0 }},
  "fit": {{ "scaler_mode": "identity", "ridge": 0.0 }}
}}"#
    )
}

fn gfm_suite_config(count: usize) -> String {
    format!(
        r#"{{
  "scenario": {{
    "name": "gfm",
    "plant": {{ "kind": "gfm" }},
    "duration_s": 2.0,
    "sample_period_s": 0.001,
    "noise_sigma": 0.0001,
    "rng_seed": 11
  }},
  "suite": {{ "count": {count} }}
}}"#
    )
}

/// Simulation config for a known second-order plant; `suite` derives held-out
/// events from it.
fn linear_truth_config(suite: Option<usize>) -> String {
    let suite = match suite {
        Some(count) => format!(",\n  \"suite\": {{ \"count\": {count} }}"),
        None => String::new(),
    };
    format!(
        r#"{{
  "scenario": {{
    "name": "truth",
    "plant": {{
      "kind": "linear_truth",
      "orders": {{ "na": 2, "nb": 2, "nc": 1, "nk": 0 }},
      "outputs": [ {{ "ar": [1.5, -0.7], "exo": [[1.0, 0.5]], "ma": [0.3] }} ],
      "input_names": ["u"],
      "output_names": ["y"]
    }},
    "events": [
      {{ "at_s": 0.0, "channel": "u", "shape": "prbs", "amplitude": 1.0, "bit_period_samples": 1 }}
    ],
    "duration_s": 4.0,
    "sample_period_s": 0.001,
    "noise_sigma": 0.01,
    "rng_seed": 7
  }}{suite}
}}"#
    )
}

#[test]
fn simulate_suite_writes_scenario_csvs_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("sim.json"), gfm_suite_config(25)).unwrap();

    let out = run(dir, &["simulate", "--config", "sim.json", "--out", "suite", "--seed", "42"]);
    assert_exit(&out, 0, "simulate suite");

    let manifest = read_json(&dir.join("suite/manifest.json"));
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["plant_kind"], "gfm");
    let files = manifest["files"].as_array().unwrap();
    assert_eq!(files.len(), 25, "one manifest row per scenario");

    let hash = manifest["config_sha256"].as_str().unwrap();
    assert_eq!(hash.len(), 64, "hex SHA-256");
    for i in 0..25 {
        let name = format!("gfm-{i:03}.csv");
        let path = dir.join("suite").join(&name);
        let text = fs::read_to_string(&path).unwrap();
        let first = text.lines().next().unwrap();
        assert!(
            first.starts_with("# seed=") && first.contains(hash),
            "{name} must open with a seed + config-hash provenance line, got: {first}"
        );
    }

    // The manifest's digest of the first file matches its actual bytes.
    use sha2::{Digest, Sha256};
    let entry = &files[0];
    let bytes = fs::read(dir.join("suite").join(entry["path"].as_str().unwrap())).unwrap();
    assert_eq!(entry["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)));
}

#[test]
fn simulate_emt_suite_writes_the_four_canonical_cases() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let cfg = r#"{
  "scenario": {
    "name": "case",
    "plant": { "kind": "emt_dip" },
    "duration_s": 0.3,
    "sample_period_s": 0.0002,
    "noise_sigma": 0.0,
    "rng_seed": 3
  },
  "suite": { "count": 4 }
}"#;
    fs::write(dir.join("sim.json"), cfg).unwrap();
    let out = run(dir, &["simulate", "--config", "sim.json", "--out", "cases"]);
    assert_exit(&out, 0, "EMT dip suite");

    let manifest = read_json(&dir.join("cases/manifest.json"));
    assert_eq!(manifest["plant_kind"], "emt_dip");
    assert_eq!(manifest["files"].as_array().unwrap().len(), 4);

    // The first four suite members follow the canonical dip-envelope table;
    // with zero noise the traces differ only through those envelopes, so all
    // four files must be pairwise distinct past the provenance line.
    let bodies: Vec<String> = (0..4)
        .map(|i| {
            let text = fs::read_to_string(dir.join(format!("cases/case-{i:03}.csv"))).unwrap();
            text.lines().skip(1).collect::<Vec<_>>().join("\n")
        })
        .collect();
    for i in 0..4 {
        assert!(bodies[i].starts_with("t,v,"), "dataset header of case {i}");
        for j in i + 1..4 {
            assert_ne!(bodies[i], bodies[j], "canonical cases {i} and {j} must differ");
        }
    }
}

#[test]
fn simulate_refuses_to_overwrite_without_force() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("sim.json"), linear_truth_config(None)).unwrap();

    let first = run(dir, &["simulate", "--config", "sim.json", "--out", "data"]);
    assert_exit(&first, 0, "first simulate");
    let original = fs::read(dir.join("data/truth.csv")).unwrap();

    let second = run(dir, &["simulate", "--config", "sim.json", "--out", "data"]);
    assert_exit(&second, 1, "re-run into a finished directory");
    let stderr = String::from_utf8_lossy(&second.stderr);
    assert!(stderr.contains("--force"), "refusal must point at --force, got: {stderr}");
    assert_eq!(
        fs::read(dir.join("data/truth.csv")).unwrap(),
        original,
        "refused run must not touch existing artifacts"
    );

    let forced = run(dir, &["simulate", "--config", "sim.json", "--out", "data", "--force"]);
    assert_exit(&forced, 0, "forced overwrite");
}

#[test]
fn fit_recovers_the_plant_and_stamps_provenance() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("sim.json"), linear_truth_config(None)).unwrap();
    assert_exit(
        &run(dir, &["simulate", "--config", "sim.json", "--out", "data"]),
        0,
        "simulate",
    );

    let fit_cfg = format!(
        r#"{{
  "train": ["data/truth.csv"],
  "roles": {ROLES},
  "orders": {{ "na": 2, "nb": 2, "nc": 1, "nk": 0 }},
  "fit": {{ "scaler_mode": "identity", "ridge": 0.0 }},
  "seed": 7
}}"#
    );
    fs::write(dir.join("fit.json"), fit_cfg).unwrap();
    let out = run(dir, &["fit", "--config", "fit.json", "--out", "fitout"]);
    assert_exit(&out, 0, "fit on clean identifiable data");

    let model = ArmaxModel::load_json(&dir.join("fitout/model.json")).unwrap();
    let coeffs = &model.output_coeffs()[0];
    assert!((coeffs.ar[0] - 1.5).abs() < 0.02, "ar1 {} vs 1.5", coeffs.ar[0]);
    assert!((coeffs.ar[1] + 0.7).abs() < 0.02, "ar2 {} vs -0.7", coeffs.ar[1]);
    assert!((coeffs.exo[0][0] - 1.0).abs() < 0.02, "b1 {}", coeffs.exo[0][0]);
    assert!((coeffs.exo[0][1] - 0.5).abs() < 0.02, "b2 {}", coeffs.exo[0][1]);

    let manifest = read_json(&dir.join("fitout/manifest.json"));
    assert_eq!(model.meta().seed, Some(7), "model carries the run seed");
    assert_eq!(
        model.meta().config_hash.as_deref(),
        manifest["config_sha256"].as_str(),
        "model carries the config hash"
    );

    let report = read_json(&dir.join("fitout/fit_report.json"));
    assert_eq!(report["converged"], true);
    assert_eq!(report["trained_on"], "data/truth.csv");
    assert_eq!(report["seed"], 7);
}

#[test]
fn fit_exit_codes_distinguish_warnings_from_errors() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    write_arx_csv(&dir.join("train.csv"), &arx_rows(400, 0.5, 0.5, usize::MAX, 1));

    // Noise-free data with a moving-average order requested: the residual
    // regressor collapses, the estimator keeps its ARX bootstrap without
    // converging, and the command reports completed-with-warnings.
    fs::write(dir.join("fit_ma.json"), arx_fit_config("train.csv", 1)).unwrap();
    let warn = run(dir, &["fit", "--config", "fit_ma.json", "--out", "warnout"]);
    assert_exit(&warn, 2, "non-converged fit");
    assert!(dir.join("warnout/model.json").is_file(), "best iterate still persisted");
    let report = read_json(&dir.join("warnout/fit_report.json"));
    assert_eq!(report["converged"], false);

    // A role map naming an absent column is a validation error.
    let bad_roles = r#"{
  "train": ["train.csv"],
  "roles": { "inputs": ["u_missing"], "outputs": ["y"] },
  "orders": { "na": 1, "nb": 1, "nc": 0, "nk": 0 }
}"#;
    fs::write(dir.join("fit_bad.json"), bad_roles).unwrap();
    let err = run(dir, &["fit", "--config", "fit_bad.json", "--out", "badout"]);
    assert_exit(&err, 1, "missing channel in the role map");
    let stderr = String::from_utf8_lossy(&err.stderr);
    assert!(stderr.contains("u_missing"), "error must name the column, got: {stderr}");
}

#[test]
fn validate_writes_predictions_report_and_boxplot() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    // One training record plus a three-member suite of held-out events.
    fs::write(dir.join("sim.json"), linear_truth_config(None)).unwrap();
    fs::write(dir.join("suite.json"), linear_truth_config(Some(3))).unwrap();
    assert_exit(&run(dir, &["simulate", "--config", "sim.json", "--out", "train"]), 0, "sim");
    assert_exit(
        &run(dir, &["simulate", "--config", "suite.json", "--out", "held", "--seed", "5"]),
        0,
        "suite sim",
    );

    let fit_cfg = r#"{
  "train": ["train/truth.csv"],
  "roles": { "inputs": ["u"], "outputs": ["y"] },
  "orders": { "na": 2, "nb": 2, "nc": 1, "nk": 0 },
  "fit": { "scaler_mode": "identity", "ridge": 0.0 }
}"#;
    fs::write(dir.join("fit.json"), fit_cfg).unwrap();
    assert_exit(&run(dir, &["fit", "--config", "fit.json", "--out", "fitout"]), 0, "fit");

    let val_cfg = r#"{
  "model": "fitout/model.json",
  "datasets": ["held/truth-000.csv", "held/truth-001.csv", "held/truth-002.csv"],
  "roles": { "inputs": ["u"], "outputs": ["y"] },
  "seed": 5
}"#;
    fs::write(dir.join("val.json"), val_cfg).unwrap();
    let out = run(dir, &["validate", "--config", "val.json", "--out", "valout"]);
    assert_exit(&out, 0, "validate");

    for i in 0..3 {
        let path = dir.join(format!("valout/truth-{i:03}_predictions.csv"));
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# seed=5 config_sha256="));
        assert_eq!(lines.next().unwrap(), "t,y,y_hat");
        assert_eq!(lines.count(), 4000, "one row per sample");
    }

    let report = read_json(&dir.join("valout/validation_report.json"));
    assert_eq!(report["mode"], "measured");
    let median = report["report"]["per_channel"][0]["nrmse_pct"]["median"].as_f64().unwrap();
    assert!(median < 5.0, "held-out NRMSE median {median}% should be small");

    let boxplot = fs::read_to_string(dir.join("valout/boxplot.csv")).unwrap();
    let mut lines = boxplot.lines();
    assert!(lines.next().unwrap().starts_with("# seed=5"));
    assert_eq!(lines.next().unwrap(), "scenario,channel,rmse,nrmse_pct,fit_pct");
    assert_eq!(lines.count(), 3, "one box-plot row per scenario/channel pair");

    // In-sample validation in measured mode sits at the noise floor.
    let self_cfg = r#"{
  "model": "fitout/model.json",
  "datasets": ["train/truth.csv"],
  "roles": { "inputs": ["u"], "outputs": ["y"] }
}"#;
    fs::write(dir.join("self.json"), self_cfg).unwrap();
    let out = run(dir, &["validate", "--config", "self.json", "--out", "selfout"]);
    assert_exit(&out, 0, "in-sample validate");
    let report = read_json(&dir.join("selfout/validation_report.json"));
    let rmse = report["report"]["scenarios"][0]["rmse"][0].as_f64().unwrap();
    assert!(rmse < 0.05, "in-sample one-step RMSE {rmse} should sit near the 0.01 noise floor");

    // The other feedback modes parse and run; garbage does not.
    for mode in ["freerun", "measured-until:200"] {
        let out = run(
            dir,
            &["validate", "--config", "self.json", "--out", &format!("m_{mode}"), "--mode", mode],
        );
        assert_exit(&out, 0, mode);
    }
    let bad = run(dir, &["validate", "--config", "self.json", "--out", "x", "--mode", "bogus"]);
    assert_exit(&bad, 1, "unknown feedback mode");
}

#[test]
fn monitor_logs_feedback_loss_and_persists_the_model_version() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let rows = arx_rows(600, 0.5, 0.5, usize::MAX, 3);
    write_arx_csv(&dir.join("train.csv"), &rows);
    write_stream_csv(&dir.join("stream.csv"), &rows, 300);

    fs::write(dir.join("fit.json"), arx_fit_config("train.csv", 0)).unwrap();
    assert_exit(&run(dir, &["fit", "--config", "fit.json", "--out", "fitout"]), 0, "fit");

    let mon_cfg = r#"{
  "model": "fitout/model.json",
  "stream": "stream.csv",
  "roles": { "inputs": ["u"], "outputs": ["y"] },
  "monitor": { "window": 100, "threshold": 0.05, "patience": 2, "recal_history": 400 }
}"#;
    fs::write(dir.join("mon.json"), mon_cfg).unwrap();
    let out = run(dir, &["monitor", "--config", "mon.json", "--out", "monout"]);
    assert_exit(&out, 0, "monitor over a dropout stream");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("0 trigger(s)"), "exact model must not trigger, got: {stdout}");

    let log = fs::read_to_string(dir.join("monout/events.jsonl")).unwrap();
    let events: Vec<Value> =
        log.lines().map(|l| serde_json::from_str(l).expect("event line parses")).collect();
    let losses: Vec<&Value> =
        events.iter().filter(|e| e["event"] == "feedback_lost").collect();
    assert_eq!(losses.len(), 1, "one dropout span -> one loss event");
    assert_eq!(losses[0]["index"], 300, "loss logged at the first blank sample");
    assert!(events.iter().all(|e| e["event"] != "recal_triggered"));

    let initial = ArmaxModel::load_json(&dir.join("monout/model_v1.json")).unwrap();
    assert_eq!(initial.meta().version, 1);
    let manifest = read_json(&dir.join("monout/manifest.json"));
    assert_eq!(manifest["triggers"], 0);
    assert_eq!(manifest["feedback_losses"], 1);
    assert_eq!(manifest["versions"], serde_json::json!(["model_v1.json"]));
}

#[test]
fn monitor_catches_drift_and_recalibrates() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let rows = arx_rows(10_000, 0.5, 0.8, 5_000, 9);
    write_arx_csv(&dir.join("train.csv"), &rows[..2_000]);
    write_stream_csv(&dir.join("stream.csv"), &rows, usize::MAX);

    fs::write(dir.join("fit.json"), arx_fit_config("train.csv", 0)).unwrap();
    assert_exit(&run(dir, &["fit", "--config", "fit.json", "--out", "fitout"]), 0, "fit");

    let mon_cfg = r#"{
  "model": "fitout/model.json",
  "stream": "stream.csv",
  "roles": { "inputs": ["u"], "outputs": ["y"] },
  "monitor": {
    "window": 100,
    "threshold": 0.05,
    "patience": 2,
    "recal_history": 1000,
    "recal_method": "warm_rls"
  },
  "recal_fit": {
    "scaler_mode": "identity",
    "forgetting": 0.98,
    "initial_covariance_scale": 10000.0
  }
}"#;
    fs::write(dir.join("mon.json"), mon_cfg).unwrap();
    let out = run(dir, &["monitor", "--config", "mon.json", "--out", "monout"]);
    assert_exit(&out, 0, "monitor over a drifting stream");

    let log = fs::read_to_string(dir.join("monout/events.jsonl")).unwrap();
    let events: Vec<Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let triggers: Vec<&Value> =
        events.iter().filter(|e| e["event"] == "recal_triggered").collect();
    assert_eq!(triggers.len(), 1, "one regime change -> one trigger");
    let at = triggers[0]["index"].as_u64().unwrap();
    assert!(
        (5_000..=5_200).contains(&at),
        "trigger at {at}, expected within patience*window of the change"
    );
    assert_eq!(events.iter().filter(|e| e["event"] == "recal_completed").count(), 1);

    let recal = ArmaxModel::load_json(&dir.join("monout/model_v2.json")).unwrap();
    assert_eq!(recal.meta().version, 2);
    let ar1 = recal.output_coeffs()[0].ar[0];
    assert!((ar1 - 0.8).abs() < 0.05, "recalibrated ar1 {ar1} should track the new regime");

    let manifest = read_json(&dir.join("monout/manifest.json"));
    assert_eq!(manifest["recalibrations"], 1);
    let final_rmse = manifest["final_rolling_rmse"].as_f64().unwrap();
    assert!(final_rmse < 0.05, "post-recalibration rolling RMSE {final_rmse} back under threshold");
}

#[test]
fn reruns_reproduce_artifacts_bit_exactly_modulo_the_manifest_timestamp() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("sim.json"), linear_truth_config(None)).unwrap();
    assert_exit(&run(dir, &["simulate", "--config", "sim.json", "--out", "a"]), 0, "run a");
    assert_exit(&run(dir, &["simulate", "--config", "sim.json", "--out", "b"]), 0, "run b");
    assert_eq!(
        fs::read(dir.join("a/truth.csv")).unwrap(),
        fs::read(dir.join("b/truth.csv")).unwrap(),
        "dataset bytes must be identical across re-runs"
    );

    let fit_cfg = r#"{
  "train": ["a/truth.csv"],
  "roles": { "inputs": ["u"], "outputs": ["y"] },
  "orders": { "na": 2, "nb": 2, "nc": 1, "nk": 0 }
}"#;
    fs::write(dir.join("fit.json"), fit_cfg).unwrap();
    assert_exit(&run(dir, &["fit", "--config", "fit.json", "--out", "fa"]), 0, "fit a");
    assert_exit(&run(dir, &["fit", "--config", "fit.json", "--out", "fb"]), 0, "fit b");
    for name in ["model.json", "fit_report.json"] {
        assert_eq!(
            fs::read(dir.join("fa").join(name)).unwrap(),
            fs::read(dir.join("fb").join(name)).unwrap(),
            "{name} must be byte-identical across re-runs"
        );
    }

    let strip_time = |p: PathBuf| {
        let mut v = read_json(&p);
        let stamp = v["created_utc"].take();
        assert!(stamp.as_str().is_some_and(|s| !s.is_empty()), "manifest carries a timestamp");
        v
    };
    assert_eq!(
        strip_time(dir.join("fa/manifest.json")),
        strip_time(dir.join("fb/manifest.json")),
        "manifests must agree on everything but created_utc"
    );
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();

    let none = run(dir, &[]);
    assert_exit(&none, 1, "no subcommand");

    let unknown = run(dir, &["simulate", "--config", "x.json", "--out", "o", "--bogus"]);
    assert_exit(&unknown, 1, "unknown flag");

    let missing = run(dir, &["simulate", "--config", "absent.json", "--out", "o"]);
    assert_exit(&missing, 1, "missing config file");
    assert!(String::from_utf8_lossy(&missing.stderr).contains("absent.json"));

    let help = run(dir, &["--help"]);
    assert_exit(&help, 0, "--help");
    assert!(String::from_utf8_lossy(&help.stdout).contains("simulate"));
}
