use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{derive_seed, Action, Observation};
use crate::masac::Policy;
use crate::simcore::EnvConfig;

const RANDOM_STREAM: u64 = 0x5eed_0f_7a4d;

/// Uniform over all `M × β` channel/power pairs, reseeded per episode.
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn draw(&mut self, cfg: &EnvConfig) -> Action {
        Action::from_index(self.rng.random_range(0..cfg.n_actions()), cfg)
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn select(&mut self, _agent: usize, _obs: &Observation, cfg: &EnvConfig) -> Action {
        self.draw(cfg)
    }

    fn reset(&mut self, episode_seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(derive_seed(episode_seed, RANDOM_STREAM));
    }
}

/// Least-RSSI channel at maximum power, re-decided every TTI.
pub struct DgaPolicy;

/// Lowest index among the minima.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

impl DgaPolicy {
    pub fn choose(obs: &Observation, cfg: &EnvConfig) -> Action {
        Action::new(argmin(&obs.rssi_dbm), cfg.max_level())
    }
}

impl Policy for DgaPolicy {
    fn name(&self) -> &str {
        "dga"
    }

    fn select(&mut self, _agent: usize, obs: &Observation, cfg: &EnvConfig) -> Action {
        Self::choose(obs, cfg)
    }
}

/// The same action for every agent at every TTI.
pub struct FixedPolicy {
    pub action: Action,
    pub label: String,
}

impl FixedPolicy {
    /// Every subnetwork silent.
    pub fn all_off(cfg: &EnvConfig) -> Self {
        Self { action: Action::null(cfg), label: "all_off".into() }
    }

    pub fn max_power(channel: usize, cfg: &EnvConfig) -> Self {
        Self { action: Action::new(channel, cfg.max_level()), label: "max_power".into() }
    }
}

impl Policy for FixedPolicy {
    fn name(&self) -> &str {
        &self.label
    }

    fn select(&mut self, _agent: usize, _obs: &Observation, _cfg: &EnvConfig) -> Action {
        self.action
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmin_prefers_lowest_index_on_ties() {
        assert_eq!(argmin(&[-90.0, -114.0, -100.0]), 1);
        assert_eq!(argmin(&[-80.0, -80.0, -80.0]), 0);
        assert_eq!(argmin(&[-70.0, -90.0, -90.0]), 1);
    }
}
