use serde::{Deserialize, Serialize};

use super::sweep::{evaluate_checkpoint, evaluate_heuristic};
use crate::baselines::PolicyVariant;
use crate::env::TraceRecord;
use crate::error::Result;
use crate::masac::{ActorCheckpoint, ExecutionReport};
use crate::simcore::EnvConfig;

/// Heterogeneous payloads of the four-subnetwork QoS scenario, in bits.
pub const QOS_PAYLOADS_BITS: [u64; 4] = [17_000, 34_000, 34_000, 51_000];

/// Four subnetworks, three channels, heterogeneous payloads, desk layout.
pub fn qos_config() -> EnvConfig {
    let mut cfg = EnvConfig::desk(4, 3);
    cfg.payload_bits = QOS_PAYLOADS_BITS.to_vec();
    cfg
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QosReport {
    pub episodes: usize,
    pub trained_success: Vec<f64>,
    pub random_success: Vec<f64>,
    /// Trained policy at least as successful as random on every agent.
    pub success: bool,
    /// Per-TTI records of the first trained episode.
    pub timeline: Vec<TraceRecord>,
}

fn success_rates(r: &ExecutionReport) -> Vec<f64> {
    (0..r.per_agent.len()).map(|i| r.success_rate(i)).collect()
}

pub fn run_qos_scenario(cfg: &EnvConfig, ckpt: &ActorCheckpoint, episodes: usize, seed: u64) -> Result<QosReport> {
    let trained = evaluate_checkpoint(ckpt, cfg, episodes, seed, false)?;
    let random = evaluate_heuristic(PolicyVariant::Random, cfg, episodes, seed, false)?;
    let timeline = evaluate_checkpoint(ckpt, cfg, 1, seed, true)?.trace;
    let trained_success = success_rates(&trained);
    let random_success = success_rates(&random);
    let success = trained_success.iter().zip(&random_success).all(|(t, r)| t >= r);
    Ok(QosReport { episodes, trained_success, random_success, success, timeline })
}
