use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masac::ExecutionReport;

pub const RECORD_SCHEMA: u32 = 1;
pub const RECORDS_FILE: &str = "records.jsonl";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Ok,
    /// No checkpoint was available; the numeric fields are meaningless.
    Skipped,
}

/// Outcome of evaluating one variant at one sweep point with one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutageRecord {
    pub schema: u32,
    pub experiment: String,
    pub variant: String,
    pub sweep: String,
    pub sweep_value: Option<f64>,
    pub seed: u64,
    pub status: RecordStatus,
    /// Failed agent-episodes over all agent-episodes.
    pub outage: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub failures: u64,
    pub trials: u64,
    pub mean_reward: f64,
    pub episodes: usize,
    pub per_agent_success: Vec<f64>,
    pub note: Option<String>,
}

impl OutageRecord {
    pub fn from_report(experiment: &str, sweep: &str, value: Option<f64>, seed: u64, episodes: usize, report: &ExecutionReport) -> Self {
        Self {
            schema: RECORD_SCHEMA,
            experiment: experiment.to_string(),
            variant: report.policy.clone(),
            sweep: sweep.to_string(),
            sweep_value: value,
            seed,
            status: RecordStatus::Ok,
            outage: report.stats.outage,
            ci_low: report.stats.ci_low,
            ci_high: report.stats.ci_high,
            failures: report.stats.failures,
            trials: report.stats.trials,
            mean_reward: report.mean_reward,
            episodes,
            per_agent_success: (0..report.per_agent.len()).map(|i| report.success_rate(i)).collect(),
            note: None,
        }
    }

    pub fn skipped(experiment: &str, variant: &str, sweep: &str, value: Option<f64>, seed: u64, note: String) -> Self {
        Self {
            schema: RECORD_SCHEMA,
            experiment: experiment.to_string(),
            variant: variant.to_string(),
            sweep: sweep.to_string(),
            sweep_value: value,
            seed,
            status: RecordStatus::Skipped,
            outage: f64::NAN,
            ci_low: f64::NAN,
            ci_high: f64::NAN,
            failures: 0,
            trials: 0,
            mean_reward: f64::NAN,
            episodes: 0,
            per_agent_success: Vec::new(),
            note: Some(note),
        }
    }
}

pub fn write_records(records: &[OutageRecord], mut out: impl Write) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_records(input: impl BufRead) -> Result<Vec<OutageRecord>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

pub fn read_records_file(path: &Path) -> Result<Vec<OutageRecord>> {
    read_records(BufReader::new(File::open(path)?))
}

/// Writes `<root>/<variant>/<seed>/records.jsonl` for every group; returns the files written.
pub fn write_record_tree(root: &Path, records: &[OutageRecord]) -> Result<Vec<PathBuf>> {
    let mut groups: BTreeMap<(String, u64), Vec<OutageRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.variant.clone(), r.seed)).or_default().push(r.clone());
    }
    let mut written = Vec::new();
    for ((variant, seed), rs) in groups {
        let dir = root.join(&variant).join(seed.to_string());
        fs::create_dir_all(&dir)?;
        let path = dir.join(RECORDS_FILE);
        write_records(&rs, File::create(&path)?)?;
        written.push(path);
    }
    Ok(written)
}

/// Every `records.jsonl` below `root`, in path order.
pub fn collect_records(root: &Path) -> Result<Vec<OutageRecord>> {
    let mut files = Vec::new();
    find_files(root, RECORDS_FILE, &mut files)?;
    files.sort();
    let mut out = Vec::new();
    for f in files {
        out.extend(read_records_file(&f)?);
    }
    Ok(out)
}

/// Files named `name` anywhere below `dir`, in path order.
pub(crate) fn find_files(dir: &Path, name: &str, out: &mut Vec<PathBuf>) -> Result<()> {
    if !dir.is_dir() {
        return Ok(());
    }
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::Io(std::io::Error::other(e)))?;
        if entry.file_type().is_file() && entry.file_name() == name {
            out.push(entry.into_path());
        }
    }
    Ok(())
}
