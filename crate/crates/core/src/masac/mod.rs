//! Multi-agent soft actor-critic: replay, critic regression, counterfactual
//! policy gradient, target tracking, and decentralised execution.

mod checkpoint;
mod config;
mod execute;
mod learner;
mod metrics;
mod replay;
mod targets;
mod train;

pub use checkpoint::{ActorArch, ActorCheckpoint, CheckpointFile, CheckpointHeader, SectionInfo, CHECKPOINT_VERSION};
pub use config::{PolicyMode, TargetMode, TerminalMode, TrainerConfig};
pub use execute::{execute, rollout, summarise, wilson_interval, ActorPolicy, ExecutionReport, OutageStats, Policy, Z95};
pub use learner::{actor_log_probs, exact_objective, sample_rows, sampled_surrogate, Learner, MasacLearner, UpdateStats};
pub use metrics::{
    digest, read_metrics, read_metrics_file, write_metrics, EpisodeMetrics, NullObserver, RunWriter, TrainObserver, METRICS_SCHEMA,
};
pub use replay::{History, ReplayBuffer, SampledBatch, Transition};
pub use targets::{advantages, counterfactual_baseline, joint_actions, joint_index, soft_value_joint, soft_value_own, td_target};
pub use train::{joint_features, train, TrainOutcome};
