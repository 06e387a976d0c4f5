//! `ibrtwin fit`: training CSVs in, serialized model + fit report out.

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;

use ibrtwin_core::{
    fit_batch_els, fit_recursive, ingest_csv, select_training_index, FitReport,
};

use crate::artifacts::Workspace;
use crate::config::{self, FitMethod, FitSpec};
use crate::{FitArgs, Outcome};

/// The persisted fit report: the estimator's diagnostics plus enough
/// provenance to re-run the fit.
#[derive(Debug, Serialize)]
struct FitReportArtifact<'a> {
    seed: u64,
    config_sha256: &'a str,
    /// Training file the model was fitted on.
    trained_on: String,
    /// Index of `trained_on` within the config's candidate list.
    trained_on_index: usize,
    method: FitMethod,
    converged: bool,
    report: &'a FitReport,
}

pub fn run(args: &FitArgs) -> Result<Outcome> {
    let mut spec: FitSpec = config::load_spec(&args.config)?;
    if let Some(seed) = args.seed {
        spec.seed = Some(seed);
    }
    let seed = spec.seed.unwrap_or(0);
    spec.seed = Some(seed);
    let hash = config::config_hash(&spec)?;

    let base = config::config_dir(&args.config);
    anyhow::ensure!(!spec.train.is_empty(), "config field `train`: needs at least one CSV");
    let mut datasets = Vec::with_capacity(spec.train.len());
    for (i, rel) in spec.train.iter().enumerate() {
        let path = config::resolve_input(&base, &format!("train[{i}]"), rel)?;
        let data = ingest_csv(&path, &spec.roles)
            .with_context(|| format!("ingesting training data {}", path.display()))?;
        datasets.push(data);
    }

    // With several candidate records, train on the spectrally richest one —
    // the same selection rule the validation workflow uses.
    let idx = if datasets.len() == 1 {
        0
    } else {
        select_training_index(&datasets).context("selecting the training record")?
    };
    let trained_on = spec.train[idx].display().to_string();

    let (mut model, report) = match spec.method {
        FitMethod::BatchEls => fit_batch_els(&datasets[idx], &spec.orders, &spec.fit),
        FitMethod::Recursive => fit_recursive(&datasets[idx], &spec.orders, &spec.fit, None),
    }
    .with_context(|| format!("fitting on {trained_on}"))?;
    model.meta_mut().seed = Some(seed);
    model.meta_mut().config_hash = Some(hash.clone());
    // Persisted artifacts stay byte-deterministic across re-runs; the run's
    // wall-clock time lives in the manifest, not in the model file.
    model.meta_mut().fitted_at = String::new();

    let mut ws = Workspace::create(&args.out, args.force)?;
    let model_path = ws.guard("model.json")?;
    model.save_json(&model_path).with_context(|| format!("writing {}", model_path.display()))?;
    ws.record("model.json", Some(seed))?;

    let converged = report.all_converged();
    ws.write_json(
        "fit_report.json",
        &FitReportArtifact {
            seed,
            config_sha256: &hash,
            trained_on: trained_on.clone(),
            trained_on_index: idx,
            method: spec.method,
            converged,
            report: &report,
        },
    )?;
    ws.finish(
        "fit",
        seed,
        &hash,
        json!({ "trained_on": trained_on, "converged": converged }),
    )?;

    for (name, out) in model.output_names().iter().zip(&report.per_output) {
        println!(
            "  {name}: {} in {} pass(es), residual RMS {:.3e}{}",
            if out.converged { "converged" } else { "did not converge" },
            out.iterations,
            out.residual_rms,
            if out.stable { "" } else { " [unstable AR roots]" },
        );
    }
    println!("model -> {}", model_path.display());
    if converged {
        Ok(Outcome::Clean)
    } else {
        eprintln!("warning: fit kept its best iterate without converging; see fit_report.json");
        Ok(Outcome::Warnings)
    }
}
