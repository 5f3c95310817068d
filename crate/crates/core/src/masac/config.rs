use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How expectations over next actions in the critic target are taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Full joint enumeration when `(M·β)^N` is at most `exact_joint_limit`;
    /// otherwise exact over the agent's own action with the others sampled.
    Exact,
    /// One sampled joint next action.
    Sampled,
}

/// How the end of the time budget is treated in the critic target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalMode {
    /// Bootstrap through the end of the episode (time-limit truncation).
    Truncate,
    /// Suppress the bootstrap term on the last step.
    Terminal,
}

/// Form of the policy objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    /// Score-function estimate with one freshly sampled action per agent.
    Sampled,
    /// Exact expectation over the agent's own actions.
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerConfig {
    #[serde(default = "d::lr_actor")]
    pub lr_actor: f64,
    #[serde(default = "d::lr_critic")]
    pub lr_critic: f64,
    #[serde(default = "d::gamma")]
    pub gamma: f64,
    /// Entropy temperature.
    #[serde(default = "d::alpha")]
    pub alpha: f64,
    /// Target update `θ̄ ← τθ̄ + (1−τ)θ`.
    #[serde(default = "d::tau")]
    pub tau: f64,
    #[serde(default = "d::batch")]
    pub batch_size: usize,
    #[serde(default = "d::capacity")]
    pub buffer_capacity: usize,
    pub episodes: usize,
    #[serde(default = "d::one")]
    pub updates_per_step: usize,
    /// Environment steps between update rounds.
    #[serde(default = "d::one")]
    pub update_every: usize,
    #[serde(default = "d::warmup")]
    pub warmup: usize,
    #[serde(default = "d::target_mode")]
    pub target_mode: TargetMode,
    #[serde(default = "d::joint_limit")]
    pub exact_joint_limit: usize,
    #[serde(default = "d::terminal")]
    pub terminal: TerminalMode,
    #[serde(default = "d::policy_mode")]
    pub policy_mode: PolicyMode,
    #[serde(default)]
    pub grad_clip: Option<f64>,
    #[serde(default = "d::k_hist")]
    pub k_hist: usize,
    #[serde(default = "d::gumbel")]
    pub gumbel_temperature: f64,
    /// Episodes between saved actor checkpoints (0 disables).
    #[serde(default)]
    pub checkpoint_every: usize,
}

mod d {
    use super::*;
    pub fn lr_actor() -> f64 {
        1e-4
    }
    pub fn lr_critic() -> f64 {
        1e-3
    }
    pub fn gamma() -> f64 {
        0.9
    }
    pub fn alpha() -> f64 {
        0.05
    }
    pub fn tau() -> f64 {
        0.995
    }
    pub fn batch() -> usize {
        64
    }
    pub fn capacity() -> usize {
        100_000
    }
    pub fn one() -> usize {
        1
    }
    pub fn warmup() -> usize {
        1000
    }
    pub fn target_mode() -> TargetMode {
        TargetMode::Exact
    }
    pub fn joint_limit() -> usize {
        32
    }
    pub fn terminal() -> TerminalMode {
        TerminalMode::Truncate
    }
    pub fn policy_mode() -> PolicyMode {
        PolicyMode::Sampled
    }
    pub fn k_hist() -> usize {
        5
    }
    pub fn gumbel() -> f64 {
        1.0
    }
}

impl TrainerConfig {
    pub fn new(episodes: usize) -> Self {
        Self {
            lr_actor: d::lr_actor(),
            lr_critic: d::lr_critic(),
            gamma: d::gamma(),
            alpha: d::alpha(),
            tau: d::tau(),
            batch_size: d::batch(),
            buffer_capacity: d::capacity(),
            episodes,
            updates_per_step: 1,
            update_every: 1,
            warmup: d::warmup(),
            target_mode: d::target_mode(),
            exact_joint_limit: d::joint_limit(),
            terminal: d::terminal(),
            policy_mode: d::policy_mode(),
            grad_clip: None,
            k_hist: d::k_hist(),
            gumbel_temperature: d::gumbel(),
            checkpoint_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let mut check = |ok: bool, msg: &str| {
            if !ok {
                errs.push(msg.to_string());
            }
        };
        check(self.lr_actor > 0.0 && self.lr_actor <= 1.0, "lr_actor must lie in (0, 1]");
        check(self.lr_critic > 0.0 && self.lr_critic <= 1.0, "lr_critic must lie in (0, 1]");
        check((0.0..1.0).contains(&self.gamma), "gamma must lie in [0, 1)");
        check(self.alpha >= 0.0 && self.alpha.is_finite(), "alpha must be >= 0");
        check((0.0..=1.0).contains(&self.tau), "tau must lie in [0, 1]");
        check(self.batch_size >= 1, "batch_size must be >= 1");
        check(self.buffer_capacity >= self.batch_size, "buffer_capacity must be >= batch_size");
        check(self.updates_per_step >= 1, "updates_per_step must be >= 1");
        check(self.update_every >= 1, "update_every must be >= 1");
        check(self.k_hist >= 1, "k_hist must be >= 1");
        check(self.gumbel_temperature > 0.0, "gumbel_temperature must be positive");
        check(self.grad_clip.is_none_or(|c| c > 0.0), "grad_clip must be positive");
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.join("; ")))
        }
    }
}
