//! Run directories: manifest written before any work, summary written last.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use subnet_core::eval::RECORD_SCHEMA;
use subnet_core::masac::{digest, CHECKPOINT_VERSION, METRICS_SCHEMA};

use crate::config::ResolvedConfig;
use crate::error::{CliError, CliResult};

pub const RUN_ROOT_ENV: &str = "SUBNET_RUN_ROOT";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.json";

pub fn run_root() -> PathBuf {
    std::env::var_os(RUN_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

pub fn unix_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// Creates `dir`, refusing any directory that already holds files.
pub fn prepare_run_dir(dir: &Path) -> CliResult<()> {
    if dir.exists() {
        let occupied = fs::read_dir(dir)?.next().is_some();
        if occupied || !dir.is_dir() {
            return Err(CliError::validation(format!(
                "refusing to write into existing run directory {}; pass a fresh --out",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodeVersion {
    pub package: String,
    pub version: String,
    pub checkpoint_format: u32,
    pub metrics_schema: u32,
    pub record_schema: u32,
}

impl CodeVersion {
    pub fn current() -> Self {
        Self {
            package: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            checkpoint_format: CHECKPOINT_VERSION,
            metrics_schema: METRICS_SCHEMA,
            record_schema: RECORD_SCHEMA,
        }
    }
}

/// Resolved inputs of one command invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub seed: u64,
    pub deterministic: bool,
    pub config: ResolvedConfig,
    pub checkpoint: Option<PathBuf>,
    pub code_version: CodeVersion,
    pub started_unix_ms: u64,
}

impl RunManifest {
    /// Writes `manifest.json`; fails if one already exists.
    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let mut f = OpenOptions::new().write(true).create_new(true).open(dir.join(MANIFEST_FILE))?;
        f.write_all(serde_json::to_string_pretty(self)?.as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn read(dir: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Outcome of a command, written after it ends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub status: String,
    pub finished_unix_ms: u64,
    /// SHA-256 of every deterministic output file, keyed by path relative to the run directory.
    pub digests: BTreeMap<String, String>,
    pub details: serde_json::Value,
}

impl RunSummary {
    pub fn new(status: &str, dir: &Path, outputs: &[PathBuf], details: serde_json::Value) -> CliResult<Self> {
        let mut digests = BTreeMap::new();
        for p in outputs {
            let rel = p.strip_prefix(dir).unwrap_or(p).to_string_lossy().replace('\\', "/");
            digests.insert(rel, digest(&fs::read(p)?));
        }
        Ok(Self { status: status.into(), finished_unix_ms: unix_ms(), digests, details })
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        fs::write(dir.join(SUMMARY_FILE), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn read(dir: &Path) -> CliResult<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(dir.join(SUMMARY_FILE))?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn occupied_directories_are_refused() {
        let d = tempfile::tempdir().unwrap();
        prepare_run_dir(d.path()).unwrap();
        fs::write(d.path().join("x"), b"1").unwrap();
        let err = prepare_run_dir(d.path()).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        prepare_run_dir(&d.path().join("fresh/nested")).unwrap();
    }
}
