//! The `run` subcommand: report files plus a manifest, each written atomically.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

use varlab_core::lab::config::ExperimentConfig;
use varlab_core::lab::Lab;

pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_JSON: &str = "report.json";
pub const MANIFEST_JSON: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct Outputs {
    pub report_csv: PathBuf,
    pub report_json: PathBuf,
    pub manifest: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    /// SHA-256 (hex) of the canonical config text stored in `report.json`.
    pub config_sha256: String,
    pub artifact_version: String,
    pub seed: u64,
    pub config_path: PathBuf,
    /// Seconds since the Unix epoch.
    pub started_at: f64,
    pub finished_at: f64,
    pub outputs: Outputs,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Writes through a hidden temporary file in the same directory, then renames.
fn write_atomic(dir: &Path, name: &str, contents: &str) -> anyhow::Result<PathBuf> {
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, &target).with_context(|| format!("renaming to {}", target.display()))?;
    Ok(target)
}

pub fn run(lab: &Lab, cfg: &ExperimentConfig, config_path: &Path, out: &Path) -> anyhow::Result<RunManifest> {
    let started_at = now();
    let report = lab.run(cfg)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let report_csv = write_atomic(out, REPORT_CSV, &report.to_csv())?;
    let report_json = write_atomic(out, REPORT_JSON, &report.to_json())?;
    let manifest = RunManifest {
        config_sha256: sha256_hex(report.config.as_bytes()),
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.ensemble.seed,
        config_path: config_path.to_path_buf(),
        started_at,
        finished_at: now(),
        outputs: Outputs {
            report_csv,
            report_json,
            manifest: out.join(MANIFEST_JSON),
        },
    };
    write_atomic(out, MANIFEST_JSON, &serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}
