//! `ibrtwin validate`: a fitted model and held-out CSVs in, per-scenario
//! prediction traces and an aggregate error report out.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use ibrtwin_core::{
    ingest_csv, predict_horizon, ArmaxModel, ErrorSummary, FeedbackMode, HorizonPrediction,
    SuiteReport, TimeSeriesDataset,
};

use crate::artifacts::Workspace;
use crate::config::{self, ValidateSpec};
use crate::{Outcome, ValidateArgs};

/// The persisted validation report.
#[derive(Debug, Serialize)]
struct ValidationReportArtifact<'a> {
    seed: u64,
    config_sha256: &'a str,
    model: String,
    mode: FeedbackMode,
    /// Leading rows of each trace that seed the predictor (copies of the
    /// measurements, excluded from the error metrics).
    seed_rows: usize,
    report: &'a SuiteReport,
}

/// Scenario label from the dataset file name, made unique across the run.
fn scenario_label(path: &Path, used: &mut HashSet<String>) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let stem = if stem.is_empty() { "scenario".to_string() } else { stem };
    let mut label = stem.clone();
    let mut n = 1;
    while !used.insert(label.clone()) {
        n += 1;
        label = format!("{stem}_{n}");
    }
    label
}

/// Renders one prediction trace as CSV: time, then the measured and
/// predicted value of every output channel. Values use the shortest
/// round-trip float form.
fn predictions_csv(
    provenance: &str,
    data: &TimeSeriesDataset,
    pred: &HorizonPrediction,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {provenance}");
    out.push('t');
    for name in data.output_names() {
        let _ = write!(out, ",{name},{name}_hat");
    }
    out.push('\n');
    for t in 0..data.rows() {
        let _ = write!(out, "{}", data.time(t));
        for m in 0..data.n_outputs() {
            let _ = write!(out, ",{},{}", data.outputs()[(t, m)], pred.outputs[(t, m)]);
        }
        out.push('\n');
    }
    out
}

pub fn run(args: &ValidateArgs) -> Result<Outcome> {
    let mut spec: ValidateSpec = config::load_spec(&args.config)?;
    if let Some(seed) = args.seed {
        spec.seed = Some(seed);
    }
    let seed = spec.seed.unwrap_or(0);
    spec.seed = Some(seed);
    let hash = config::config_hash(&spec)?;

    let base = config::config_dir(&args.config);
    let model_path = config::resolve_input(&base, "model", &spec.model)?;
    let model = ArmaxModel::load_json(&model_path)
        .with_context(|| format!("loading model {}", model_path.display()))?;

    anyhow::ensure!(!spec.datasets.is_empty(), "config field `datasets`: needs at least one CSV");
    let mut used = HashSet::new();
    let mut labeled = Vec::with_capacity(spec.datasets.len());
    for (i, rel) in spec.datasets.iter().enumerate() {
        let path = config::resolve_input(&base, &format!("datasets[{i}]"), rel)?;
        let data = ingest_csv(&path, &spec.roles)
            .with_context(|| format!("ingesting dataset {}", path.display()))?;
        labeled.push((scenario_label(&path, &mut used), data));
    }

    let predictions = labeled
        .par_iter()
        .map(|(label, data)| {
            predict_horizon(&model, data, args.mode)
                .with_context(|| format!("predicting scenario `{label}`"))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut ws = Workspace::create(&args.out, args.force)?;
    let provenance = config::provenance_line(seed, &hash);
    let mut summaries = Vec::with_capacity(labeled.len());
    let mut trace_files = Vec::with_capacity(labeled.len());
    for ((label, data), pred) in labeled.iter().zip(&predictions) {
        let name = format!("{label}_predictions.csv");
        ws.write_text(&name, &predictions_csv(&provenance, data, pred))?;
        trace_files.push(name);
        summaries.push(
            ErrorSummary::from_prediction(label.clone(), data, pred)
                .with_context(|| format!("scoring scenario `{label}`"))?,
        );
    }

    let report = ibrtwin_core::summarize_suite(&summaries).context("aggregating the suite")?;
    ws.write_json(
        "validation_report.json",
        &ValidationReportArtifact {
            seed,
            config_sha256: &hash,
            model: spec.model.display().to_string(),
            mode: args.mode,
            seed_rows: predictions[0].seed_len,
            report: &report,
        },
    )?;
    ws.write_text("boxplot.csv", &format!("# {provenance}\n{}", report.boxplot_csv()))?;
    ws.finish(
        "validate",
        seed,
        &hash,
        json!({
            "model": spec.model.display().to_string(),
            "mode": mode_label(args.mode),
            "scenarios": trace_files,
        }),
    )?;

    for dist in &report.per_channel {
        println!(
            "  {}: median RMSE {:.4e}, median NRMSE {:.2}%",
            dist.channel, dist.rmse.median, dist.nrmse_pct.median,
        );
    }
    println!("report -> {}", args.out.join("validation_report.json").display());
    Ok(Outcome::Clean)
}

/// The `--mode` spelling of a feedback mode, for the manifest.
fn mode_label(mode: FeedbackMode) -> String {
    match mode {
        FeedbackMode::Measured => "measured".to_string(),
        FeedbackMode::FreeRun => "freerun".to_string(),
        FeedbackMode::MeasuredUntil(k) => format!("measured-until:{k}"),
    }
}
