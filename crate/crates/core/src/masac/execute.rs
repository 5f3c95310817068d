use serde::{Deserialize, Serialize};

use super::checkpoint::ActorCheckpoint;
use crate::env::{derive_seed, Action, Env, Observation, TraceRecord};
use crate::error::Result;
use crate::nn::argmax;
use crate::simcore::EnvConfig;

/// Decentralised decision rule: one agent, its own observation, nothing else.
pub trait Policy {
    fn name(&self) -> &str;
    fn select(&mut self, agent: usize, obs: &Observation, cfg: &EnvConfig) -> Action;
    /// Called at every episode start with that episode's seed.
    fn reset(&mut self, _episode_seed: u64) {}
}

/// Greedy execution of trained actors.
pub struct ActorPolicy {
    pub checkpoint: ActorCheckpoint,
}

impl ActorPolicy {
    pub fn new(checkpoint: ActorCheckpoint) -> Self {
        Self { checkpoint }
    }

    pub fn action_index(&self, agent: usize, features: &[f64]) -> usize {
        let c = &self.checkpoint;
        let x = crate::nn::Matrix::from_vec(1, features.len(), features.to_vec());
        argmax(c.net.logits_plain(&c.params, agent, &x).row(0))
    }
}

impl Policy for ActorPolicy {
    fn name(&self) -> &str {
        &self.checkpoint.variant
    }

    fn select(&mut self, agent: usize, obs: &Observation, cfg: &EnvConfig) -> Action {
        Action::from_index(self.action_index(agent, &obs.features(cfg)), cfg)
    }
}

/// Binomial proportion with a Wilson score interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutageStats {
    pub failures: u64,
    pub trials: u64,
    pub outage: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

impl OutageStats {
    pub fn from_counts(failures: u64, trials: u64) -> Self {
        let (ci_low, ci_high) = wilson_interval(failures, trials, Z95);
        let outage = if trials == 0 { 0.0 } else { failures as f64 / trials as f64 };
        Self { failures, trials, outage, ci_low, ci_high }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub policy: String,
    /// `[episode][agent]`: payload not delivered within the budget.
    pub failed: Vec<Vec<bool>>,
    pub stats: OutageStats,
    pub per_agent: Vec<OutageStats>,
    pub mean_reward: f64,
    pub trace: Vec<TraceRecord>,
}

impl ExecutionReport {
    pub fn success_rate(&self, agent: usize) -> f64 {
        1.0 - self.per_agent[agent].outage
    }
}

/// Runs `episodes` episodes; episode `e` resets with `derive_seed(seed, e)`.
pub fn rollout(env: &mut Env, policy: &mut dyn Policy, episodes: usize, seed: u64, record_trace: bool) -> Result<ExecutionReport> {
    let cfg = env.cfg().clone();
    let n = cfg.n_subnetworks;
    let mut failed = Vec::with_capacity(episodes);
    let mut trace = Vec::new();
    let mut reward_sum = 0.0;
    let mut reward_count = 0usize;
    for e in 0..episodes {
        let ep_seed = derive_seed(seed, e as u64);
        policy.reset(ep_seed);
        let mut obs = env.reset(ep_seed)?;
        loop {
            let actions: Vec<Action> = (0..n).map(|i| policy.select(i, &obs[i], &cfg)).collect();
            let step = env.step(&actions)?;
            reward_sum += step.rewards.iter().sum::<f64>();
            reward_count += n;
            if record_trace {
                trace.extend(TraceRecord::from_step(&step, &actions, &cfg));
            }
            if step.done {
                failed.push(step.info.remaining_bits.iter().map(|&r| r > 0.0).collect::<Vec<_>>());
                break;
            }
            obs = step.observations;
        }
    }
    Ok(summarise(policy.name(), failed, reward_sum / reward_count.max(1) as f64, trace, n))
}

pub fn summarise(policy: &str, failed: Vec<Vec<bool>>, mean_reward: f64, trace: Vec<TraceRecord>, n: usize) -> ExecutionReport {
    let episodes = failed.len() as u64;
    let total: u64 = failed.iter().flatten().filter(|&&f| f).count() as u64;
    let per_agent = (0..n)
        .map(|i| OutageStats::from_counts(failed.iter().filter(|ep| ep[i]).count() as u64, episodes))
        .collect();
    ExecutionReport {
        policy: policy.to_string(),
        stats: OutageStats::from_counts(total, episodes * n as u64),
        per_agent,
        failed,
        mean_reward,
        trace,
    }
}

/// Decentralised greedy execution of a trained actor checkpoint.
pub fn execute(checkpoint: &ActorCheckpoint, cfg: &EnvConfig, episodes: usize, seed: u64, record_trace: bool) -> Result<ExecutionReport> {
    checkpoint.check_compatible(cfg)?;
    let mut env = Env::new(cfg.clone())?;
    let mut policy = ActorPolicy::new(checkpoint.clone());
    rollout(&mut env, &mut policy, episodes, seed, record_trace)
}
