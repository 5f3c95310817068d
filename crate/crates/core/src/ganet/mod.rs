//! Graph-attention critic (hard + soft attention) and decentralised actors.

mod actor;
mod attention;
mod critic;
mod encoder;

pub use actor::{ActorNet, Categorical};
pub use attention::{gumbel_softmax, neighbour_slots, slot_mask_to_square, HardMode};
pub use attention::{sample_gumbel, HardAttention, SoftAttention};
pub use critic::{one_hot, CriticBatch, CriticOutput, Embedding, GaNetCritic};
pub use encoder::StateEncoder;

use serde::{Deserialize, Serialize};

/// Which parts of the attention stack a critic uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticVariant {
    /// Hard attention followed by multi-head soft attention.
    Full,
    /// Soft attention over every other agent.
    NoHard,
    /// Unweighted mean of the other agents' value projections.
    NoAttn,
    /// Own observation and action only.
    Independent,
}

/// Architecture sizes of the critic and actor networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaNetConfig {
    pub n_agents: usize,
    pub obs_dim: usize,
    pub n_actions: usize,
    pub code_dim: usize,
    pub k_hist: usize,
    /// Hidden width per direction of the hard-attention BiGRU.
    pub hard_hidden: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub critic_hidden: usize,
    pub critic_fuse: usize,
    pub actor_hidden: [usize; 2],
    pub gumbel_temperature: f64,
    pub leaky_slope: f64,
    pub variant: CriticVariant,
}

impl GaNetConfig {
    pub fn new(n_agents: usize, obs_dim: usize, n_actions: usize, variant: CriticVariant) -> Self {
        Self {
            n_agents,
            obs_dim,
            n_actions,
            code_dim: 32,
            k_hist: 5,
            hard_hidden: 16,
            heads: 4,
            head_dim: 8,
            critic_hidden: 64,
            critic_fuse: 32,
            actor_hidden: [64, 32],
            gumbel_temperature: 1.0,
            leaky_slope: 0.01,
            variant,
        }
    }

    pub fn for_env(cfg: &crate::simcore::EnvConfig, variant: CriticVariant) -> Self {
        Self::new(cfg.n_subnetworks, crate::env::Observation::feature_dim(cfg), cfg.n_actions(), variant)
    }

    /// Width of the joint embedding ĥ.
    pub fn embed_dim(&self) -> usize {
        self.heads * self.head_dim
    }
}
