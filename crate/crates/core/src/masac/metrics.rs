use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::learner::Learner;
use crate::error::{Error, Result};
use crate::simcore::EnvConfig;

pub const METRICS_SCHEMA: u32 = 1;

/// One line of the training metrics stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub schema: u32,
    pub episode: usize,
    pub seed: u64,
    /// Reward averaged over agents and TTIs.
    pub mean_reward: f64,
    /// Reward summed over TTIs and averaged over agents.
    pub episode_reward: f64,
    /// Per agent: payload not fully delivered within the budget.
    pub outage: Vec<bool>,
    pub updates: u64,
    /// Means over the updates of this episode; `None` before learning starts.
    pub critic_loss: Option<f64>,
    pub policy_loss: Option<f64>,
    pub entropy: Option<f64>,
}

impl EpisodeMetrics {
    pub fn outage_rate(&self) -> f64 {
        self.outage.iter().filter(|&&o| o).count() as f64 / self.outage.len().max(1) as f64
    }
}

pub fn write_metrics(rows: &[EpisodeMetrics], mut out: impl Write) -> Result<()> {
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_metrics(input: impl BufRead) -> Result<Vec<EpisodeMetrics>> {
    let mut rows = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            rows.push(serde_json::from_str(&line)?);
        }
    }
    Ok(rows)
}

/// Hex SHA-256 of a byte stream, used to compare metrics files across runs.
pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Receives progress from the training loop.
pub trait TrainObserver {
    fn on_episode(&mut self, _metrics: &EpisodeMetrics, _learner: &dyn Learner) -> Result<()> {
        Ok(())
    }

    /// Called once before a failed run returns its error.
    fn on_abort(&mut self, _error: &Error, _learner: &dyn Learner, _last: Option<&EpisodeMetrics>) {}
}

/// Discards everything.
pub struct NullObserver;

impl TrainObserver for NullObserver {}

/// Writes `metrics.jsonl`, periodic actor checkpoints and, on failure,
/// `diagnostic.json` plus a full parameter snapshot into one directory.
pub struct RunWriter {
    dir: PathBuf,
    env: EnvConfig,
    metrics: BufWriter<File>,
    checkpoint_every: usize,
}

impl RunWriter {
    pub fn create(dir: &Path, env: &EnvConfig, checkpoint_every: usize) -> Result<Self> {
        fs::create_dir_all(dir.join("checkpoints"))?;
        let metrics = BufWriter::new(File::create(dir.join("metrics.jsonl"))?);
        Ok(Self { dir: dir.to_path_buf(), env: env.clone(), metrics, checkpoint_every })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn checkpoint_path(&self, episode: usize) -> PathBuf {
        self.dir.join("checkpoints").join(format!("actor_ep{episode:06}.ckpt"))
    }

    /// Final actor and full checkpoints.
    pub fn finish(&mut self, learner: &dyn Learner) -> Result<PathBuf> {
        self.metrics.flush()?;
        let actor = self.dir.join("actor.ckpt");
        learner.actor_checkpoint(&self.env).save(&actor)?;
        learner.full_checkpoint(&self.env)?.write(&self.dir.join("full.ckpt"))?;
        Ok(actor)
    }
}

impl TrainObserver for RunWriter {
    fn on_episode(&mut self, m: &EpisodeMetrics, learner: &dyn Learner) -> Result<()> {
        write_metrics(std::slice::from_ref(m), &mut self.metrics)?;
        if self.checkpoint_every > 0 && (m.episode + 1) % self.checkpoint_every == 0 {
            self.metrics.flush()?;
            learner.actor_checkpoint(&self.env).save(&self.checkpoint_path(m.episode))?;
        }
        Ok(())
    }

    fn on_abort(&mut self, error: &Error, learner: &dyn Learner, last: Option<&EpisodeMetrics>) {
        let _ = self.metrics.flush();
        let snapshot = serde_json::json!({
            "error": error.to_string(),
            "variant": learner.variant_name(),
            "last_episode": last,
        });
        if let Ok(f) = File::create(self.dir.join("diagnostic.json")) {
            let _ = serde_json::to_writer_pretty(f, &snapshot);
        }
        if let Ok(full) = learner.full_checkpoint(&self.env) {
            let _ = full.write(&self.dir.join("diagnostic.ckpt"));
        }
    }
}

pub fn read_metrics_file(path: &Path) -> Result<Vec<EpisodeMetrics>> {
    read_metrics(BufReader::new(File::open(path)?))
}
