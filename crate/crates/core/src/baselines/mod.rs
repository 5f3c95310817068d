//! Comparison policies: training-free heuristics, independent learners,
//! MADDPG and the attention ablations.

mod heuristics;
mod maddpg;

pub use heuristics::{argmin, DgaPolicy, FixedPolicy, RandomPolicy};
pub use maddpg::MaddpgLearner;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ganet::CriticVariant;
use crate::masac::{Learner, MasacLearner, TrainerConfig};
use crate::simcore::EnvConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyVariant {
    Random,
    Dga,
    IndependentAc,
    Maddpg,
    GanetFull,
    GanetNoHard,
    GanetNoAttn,
}

impl PolicyVariant {
    pub const ALL: [PolicyVariant; 7] = [
        Self::Random,
        Self::Dga,
        Self::IndependentAc,
        Self::Maddpg,
        Self::GanetFull,
        Self::GanetNoHard,
        Self::GanetNoAttn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::Dga => "dga",
            Self::IndependentAc => "independent_ac",
            Self::Maddpg => "maddpg",
            Self::GanetFull => "ganet_full",
            Self::GanetNoHard => "ganet_no_hard",
            Self::GanetNoAttn => "ganet_no_attn",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown policy variant `{s}`")))
    }

    pub fn is_trained(self) -> bool {
        !matches!(self, Self::Random | Self::Dga)
    }

    /// Critic used by the soft actor-critic variants.
    pub fn critic_variant(self) -> Option<CriticVariant> {
        match self {
            Self::IndependentAc => Some(CriticVariant::Independent),
            Self::GanetFull => Some(CriticVariant::Full),
            Self::GanetNoHard => Some(CriticVariant::NoHard),
            Self::GanetNoAttn => Some(CriticVariant::NoAttn),
            _ => None,
        }
    }

    /// Fresh learner for a trained variant; `None` for heuristics.
    pub fn learner(self, env: &EnvConfig, tcfg: &TrainerConfig, rng: &mut ChaCha8Rng) -> Option<Box<dyn Learner>> {
        match self {
            Self::Maddpg => Some(Box::new(MaddpgLearner::new(env, tcfg, rng))),
            v => v.critic_variant().map(|c| Box::new(MasacLearner::new(env, tcfg, c, rng)) as Box<dyn Learner>),
        }
    }
}

impl std::fmt::Display for PolicyVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
