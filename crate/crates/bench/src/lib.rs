//! Shared fixtures for the throughput benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subnet_core::env::{Action, Env, Observation};
use subnet_core::masac::{ReplayBuffer, SampledBatch, Transition};
use subnet_core::simcore::EnvConfig;

/// Desk layout used by every benchmark.
pub fn desk() -> EnvConfig {
    EnvConfig::desk(4, 3)
}

pub fn reset_env(cfg: &EnvConfig, seed: u64) -> Env {
    let mut env = Env::new(cfg.clone()).expect("valid config");
    env.reset(seed).expect("placement");
    env
}

/// Pre-drawn joint actions, `steps` of them.
pub fn action_script(cfg: &EnvConfig, steps: usize, seed: u64) -> Vec<Vec<Action>> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..steps)
        .map(|_| (0..cfg.n_subnetworks).map(|_| Action::from_index(r.random_range(0..cfg.n_actions()), cfg)).collect())
        .collect()
}

/// Batch of `len` random transitions.
pub fn random_batch(cfg: &EnvConfig, k_hist: usize, len: usize, seed: u64) -> SampledBatch {
    let n = cfg.n_subnetworks;
    let d = Observation::feature_dim(cfg);
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut rb = ReplayBuffer::new(len);
    for _ in 0..len {
        rb.push(Transition {
            frames: (0..(k_hist + 1) * n * d).map(|_| r.random_range(0.0..1.0)).collect(),
            actions: (0..n).map(|_| r.random_range(0..cfg.n_actions())).collect(),
            rewards: (0..n).map(|_| r.random_range(0.0..0.2)).collect(),
            done: false,
        });
    }
    let idx: Vec<usize> = (0..len).collect();
    rb.gather(&idx, n, d, k_hist)
}
