//! Command configuration files: JSON schemas, loading, path resolution, and
//! the provenance hash.
//!
//! Each subcommand reads one JSON document. Domain records (scenario,
//! orders, fit and monitor tuning, channel roles) deserialize straight into
//! the core types, so the config surface and the library surface cannot
//! drift apart. Relative paths inside a config resolve against the config
//! file's own directory, which keeps a config + data bundle relocatable.
//!
//! The provenance hash is the SHA-256 of the *effective* configuration — the
//! parsed document re-serialized after CLI overrides (`--seed`) are applied.
//! Two invocations that mean the same run hash identically even if their
//! config files differ in whitespace or key order of untouched defaults.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ibrtwin_core::{ArmaxOrders, ChannelRoles, FitConfig, MonitorConfig, ScenarioConfig};

/// Config for `ibrtwin simulate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    /// The scenario to run; with `suite` present, the base every member is
    /// derived from.
    pub scenario: ScenarioConfig,
    /// When present, a randomized suite is generated instead of the single
    /// base scenario.
    #[serde(default)]
    pub suite: Option<SuiteSpec>,
    /// Run seed: the suite seed when a suite is requested, otherwise the
    /// scenario's simulation seed. Overridden by `--seed`.
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Suite shape for [`SimulateSpec`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSpec {
    /// Number of scenarios to derive (at least 2).
    pub count: usize,
}

/// Config for `ibrtwin fit`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    /// Training dataset CSVs. With several candidates, the spectrally
    /// richest record is selected for training and named in the report.
    pub train: Vec<PathBuf>,
    /// Column-to-channel mapping of the training CSVs.
    pub roles: ChannelRoles,
    /// ARMAX structure to identify.
    pub orders: ArmaxOrders,
    /// Estimator tuning.
    #[serde(default)]
    pub fit: FitConfig,
    /// Which estimator to run.
    #[serde(default)]
    pub method: FitMethod,
    /// Seed recorded in the model's provenance (the data-producing run's
    /// seed, when known). Overridden by `--seed`.
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Estimator selector for [`FitSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    /// Batch extended least squares.
    #[default]
    BatchEls,
    /// Recursive least squares over the same regression.
    Recursive,
}

/// Config for `ibrtwin validate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSpec {
    /// Fitted model JSON.
    pub model: PathBuf,
    /// Held-out scenario CSVs to predict.
    pub datasets: Vec<PathBuf>,
    /// Column-to-channel mapping of the dataset CSVs.
    pub roles: ChannelRoles,
    /// Seed recorded in artifact provenance. Overridden by `--seed`.
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Config for `ibrtwin monitor`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorSpec {
    /// Fitted model JSON to put in service.
    pub model: PathBuf,
    /// Measurement stream CSV; empty output fields mark dropout spans.
    pub stream: PathBuf,
    /// Column-to-channel mapping of the stream CSV.
    pub roles: ChannelRoles,
    /// Continual-validation loop tuning.
    #[serde(default)]
    pub monitor: MonitorConfig,
    /// Estimator tuning used for recalibration fits.
    #[serde(default)]
    pub recal_fit: FitConfig,
    /// Malformed or rejected stream samples tolerated (logged and skipped)
    /// before the run aborts.
    #[serde(default = "default_error_budget")]
    pub error_budget: usize,
    /// Seed recorded in artifact provenance. Overridden by `--seed`.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_error_budget() -> usize {
    10
}

/// Reads and parses a JSON config file.
pub fn load_spec<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

/// SHA-256 over the effective configuration, hex-encoded.
pub fn config_hash<T: Serialize>(spec: &T) -> Result<String> {
    let bytes = serde_json::to_vec(spec).context("serializing effective config for hashing")?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Directory the config file lives in; anchors relative paths.
pub fn config_dir(config_path: &Path) -> PathBuf {
    config_path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."))
}

/// Resolves a config-relative path and checks it exists now, so a typo
/// surfaces as one clear startup error naming the config field.
pub fn resolve_input(base: &Path, field: &str, path: &Path) -> Result<PathBuf> {
    let full = if path.is_absolute() { path.to_path_buf() } else { base.join(path) };
    if !full.is_file() {
        bail!("config field `{field}`: file not found: {}", full.display());
    }
    Ok(full)
}

/// One provenance comment line for CSV artifacts.
pub fn provenance_line(seed: u64, config_sha256: &str) -> String {
    format!("seed={seed} config_sha256={config_sha256}")
}
