//! `ibrtwin monitor`: a fitted model and a measurement stream in, a JSON-lines
//! event log, every model version, and a run summary out.
//!
//! The stream is replayed sequentially — the loop is stateful, so there is
//! nothing to parallelize. Malformed rows (repaired by the lenient CSV
//! reader) and samples the monitor rejects are logged and skipped, up to the
//! config's error budget; past that the run aborts.

use std::fs::File;
use std::io::{BufWriter, Write};

use anyhow::{bail, Context, Result};
use serde_json::json;

use ibrtwin_core::{
    ArmaxModel, ingest_stream_csv, Monitor, MonitorError, MonitorEvent, MonitorEventKind,
};

use crate::artifacts::Workspace;
use crate::config::{self, MonitorSpec};
use crate::{MonitorArgs, Outcome};

/// Appends any monitor events not yet written to the JSON-lines log.
fn drain_events(
    log: &mut BufWriter<File>,
    events: &[MonitorEvent],
    cursor: &mut usize,
) -> Result<()> {
    while *cursor < events.len() {
        serde_json::to_writer(&mut *log, &events[*cursor]).context("writing events.jsonl")?;
        log.write_all(b"\n").context("writing events.jsonl")?;
        *cursor += 1;
    }
    Ok(())
}

/// Persists the monitor's current model under its version number, stamped
/// with this run's provenance.
fn save_version(ws: &mut Workspace, monitor: &Monitor, seed: u64, hash: &str) -> Result<String> {
    let mut model = monitor.model().clone();
    model.meta_mut().seed.get_or_insert(seed);
    model.meta_mut().config_hash = Some(hash.to_string());
    // Same rule as `fit`: artifact bytes are deterministic, the wall clock
    // lives in the manifest only.
    model.meta_mut().fitted_at = String::new();
    let name = format!("model_v{}.json", monitor.version());
    let path = ws.guard(&name)?;
    model.save_json(&path).with_context(|| format!("writing {}", path.display()))?;
    ws.record(&name, Some(seed))?;
    Ok(name)
}

pub fn run(args: &MonitorArgs) -> Result<Outcome> {
    let mut spec: MonitorSpec = config::load_spec(&args.config)?;
    if let Some(seed) = args.seed {
        spec.seed = Some(seed);
    }
    let seed = spec.seed.unwrap_or(0);
    spec.seed = Some(seed);
    let hash = config::config_hash(&spec)?;

    let base = config::config_dir(&args.config);
    let model_path = config::resolve_input(&base, "model", &spec.model)?;
    let stream_path = config::resolve_input(&base, "stream", &spec.stream)?;
    let model = ArmaxModel::load_json(&model_path)
        .with_context(|| format!("loading model {}", model_path.display()))?;

    let (stream, issues) = ingest_stream_csv(&stream_path, &spec.roles, true)
        .with_context(|| format!("ingesting stream {}", stream_path.display()))?;
    if stream.input_names != model.input_names() || stream.output_names != model.output_names() {
        bail!(
            "stream channels ({:?} -> {:?}) differ from model channels ({:?} -> {:?})",
            stream.input_names,
            stream.output_names,
            model.input_names(),
            model.output_names(),
        );
    }
    for issue in &issues {
        eprintln!("stream issue: {issue}");
    }
    if issues.len() > spec.error_budget {
        bail!(
            "stream carried {} malformed rows, over the error budget of {}",
            issues.len(),
            spec.error_budget
        );
    }

    let mut ws = Workspace::create(&args.out, args.force)?;
    let window = spec.monitor.window;
    let mut monitor =
        Monitor::new(model, spec.monitor.clone()).context("configuring the monitor")?;

    let mut versions = vec![save_version(&mut ws, &monitor, seed, &hash)?];
    let log_path = ws.guard("events.jsonl")?;
    let mut log = BufWriter::new(
        File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?,
    );

    let mut cursor = 0usize;
    let mut skipped = 0usize;
    let mut recal_failures = 0usize;
    let mut retry_pending = false;
    let mut last_rolling = None;
    for (row, sample) in stream.samples.iter().enumerate() {
        let index = monitor.next_index();
        let step = match monitor.step(index, &sample.inputs, sample.outputs.as_deref()) {
            Ok(step) => step,
            Err(err @ (MonitorError::BadSample { .. }
            | MonitorError::MissingSeedMeasurement { .. })) => {
                skipped += 1;
                eprintln!("stream row {row} skipped: {err}");
                if issues.len() + skipped > spec.error_budget {
                    log.flush().context("flushing events.jsonl")?;
                    bail!(
                        "{} stream errors, over the error budget of {}",
                        issues.len() + skipped,
                        spec.error_budget
                    );
                }
                continue;
            }
            Err(err) => return Err(err).context(format!("processing stream row {row}")),
        };
        if let Some(rms) = step.rolling_rmse {
            last_rolling = Some(rms);
        }
        // A request that could not be served yet (too little measured
        // history) stays outstanding; retry once per window while it is.
        let retry_due = retry_pending && monitor.recal_pending() && index % window == 0;
        if step.recal_requested || retry_due {
            match monitor.recalibrate(&spec.recal_fit) {
                Ok(_) => {
                    retry_pending = false;
                    versions.push(save_version(&mut ws, &monitor, seed, &hash)?);
                }
                Err(MonitorError::InsufficientHistory { .. }) => {
                    retry_pending = true;
                }
                Err(MonitorError::FitFailed(err)) => {
                    // The monitor logged RecalFailed and keeps the old model.
                    recal_failures += 1;
                    retry_pending = false;
                    eprintln!("recalibration at sample {index} failed: {err}");
                }
                Err(err) => {
                    return Err(err).context(format!("recalibrating at sample {index}"))
                }
            }
        }
        drain_events(&mut log, monitor.events(), &mut cursor)?;
    }
    log.flush().context("flushing events.jsonl")?;
    drop(log);
    ws.record("events.jsonl", None)?;

    let mut triggers = 0usize;
    let mut completions = 0usize;
    let mut feedback_losses = 0usize;
    for event in monitor.events() {
        match event.kind {
            MonitorEventKind::RecalTriggered { .. } => triggers += 1,
            MonitorEventKind::RecalCompleted { .. } => completions += 1,
            MonitorEventKind::FeedbackLost => feedback_losses += 1,
            _ => {}
        }
    }

    ws.finish(
        "monitor",
        seed,
        &hash,
        json!({
            "samples": stream.samples.len(),
            "skipped": skipped,
            "stream_issues": issues.len(),
            "triggers": triggers,
            "recalibrations": completions,
            "recal_failures": recal_failures,
            "feedback_losses": feedback_losses,
            "final_rolling_rmse": last_rolling,
            "versions": versions,
        }),
    )?;

    println!(
        "processed {} samples ({} skipped): {} trigger(s), {} recalibration(s), {} failure(s)",
        stream.samples.len(),
        skipped,
        triggers,
        completions,
        recal_failures,
    );
    match last_rolling {
        Some(rms) => println!(
            "final rolling RMSE {rms:.4e} (threshold {:.4e})",
            monitor.config().threshold
        ),
        None => println!("stream too short for a full residual window"),
    }
    println!("model versions: {}", versions.join(", "));

    if skipped > 0 || recal_failures > 0 {
        Ok(Outcome::Warnings)
    } else {
        Ok(Outcome::Clean)
    }
}
