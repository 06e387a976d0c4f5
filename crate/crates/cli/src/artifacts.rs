//! The output directory: overwrite protection, artifact bookkeeping, and the
//! manifest.
//!
//! Every command funnels its file writes through a [`Workspace`] so three
//! rules hold uniformly: nothing is overwritten unless `--force` was given,
//! every written file lands in `manifest.json` with its SHA-256, and the
//! run's only wall-clock timestamp lives in the manifest's `created_utc`
//! field — artifact payloads stay byte-deterministic.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// A manifest row: one artifact this run produced.
#[derive(Debug, Clone, Serialize)]
pub struct ManifestFile {
    /// Path relative to the output directory.
    pub path: String,
    /// SHA-256 of the file's bytes.
    pub sha256: String,
    /// Seed specific to this artifact (a suite member's simulation seed),
    /// when it differs from the run seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    seed: u64,
    config_sha256: &'a str,
    /// RFC 3339 creation time; the only field that varies across identical
    /// re-runs.
    created_utc: String,
    #[serde(flatten)]
    extra: serde_json::Value,
    files: Vec<ManifestFile>,
}

/// An output directory with overwrite protection and a pending manifest.
pub struct Workspace {
    root: PathBuf,
    force: bool,
    files: Vec<ManifestFile>,
}

impl Workspace {
    /// Opens (creating if needed) the output directory. A directory that
    /// already holds a `manifest.json` is a finished run and is refused
    /// unless `force` is set.
    pub fn create(out: &Path, force: bool) -> Result<Self> {
        fs::create_dir_all(out)
            .with_context(|| format!("creating output directory {}", out.display()))?;
        let manifest = out.join("manifest.json");
        if manifest.exists() && !force {
            bail!(
                "output directory {} already holds a manifest.json; pass --force to overwrite",
                out.display()
            );
        }
        Ok(Self { root: out.to_path_buf(), force, files: Vec::new() })
    }

    /// Absolute path for a named artifact, after the overwrite check. The
    /// caller writes the file (directly or through a library writer) and
    /// then calls [`Workspace::record`].
    pub fn guard(&self, name: &str) -> Result<PathBuf> {
        let path = self.root.join(name);
        if path.exists() && !self.force {
            bail!("refusing to overwrite {}; pass --force to allow", path.display());
        }
        Ok(path)
    }

    /// Hashes a written artifact into the manifest.
    pub fn record(&mut self, name: &str, seed: Option<u64>) -> Result<()> {
        let path = self.root.join(name);
        let bytes =
            fs::read(&path).with_context(|| format!("reading back artifact {}", path.display()))?;
        self.files.push(ManifestFile {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
            seed,
        });
        Ok(())
    }

    /// Writes a pretty-JSON artifact and records it.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.guard(name)?;
        let mut text = serde_json::to_string_pretty(value)
            .with_context(|| format!("serializing {name}"))?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.record(name, None)?;
        Ok(path)
    }

    /// Writes a text artifact and records it.
    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.guard(name)?;
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.record(name, None)?;
        Ok(path)
    }

    /// Writes `manifest.json` and consumes the workspace. `extra` holds
    /// command-specific summary fields (plant kind, trigger counts, …) and
    /// must serialize to a JSON object.
    pub fn finish(
        self,
        command: &str,
        seed: u64,
        config_sha256: &str,
        extra: serde_json::Value,
    ) -> Result<PathBuf> {
        let manifest = Manifest {
            command,
            seed,
            config_sha256,
            created_utc: chrono::Utc::now().to_rfc3339(),
            extra,
            files: self.files,
        };
        let path = self.root.join("manifest.json");
        let mut text =
            serde_json::to_string_pretty(&manifest).context("serializing manifest.json")?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
