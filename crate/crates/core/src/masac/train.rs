use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainerConfig;
use super::learner::{Learner, UpdateStats};
use super::metrics::{EpisodeMetrics, TrainObserver, METRICS_SCHEMA};
use super::replay::{History, ReplayBuffer, Transition};
use crate::env::{derive_seed, Action, Env, Observation};
use crate::error::Result;
use crate::simcore::EnvConfig;

/// Stream salt for the learner's own sampling.
const LEARNER_STREAM: u64 = 0x7a11_0c47;

pub struct TrainOutcome {
    pub metrics: Vec<EpisodeMetrics>,
    pub buffer_len: usize,
    pub env_steps: u64,
    pub updates: u64,
}

pub fn joint_features(obs: &[Observation], cfg: &EnvConfig) -> Vec<f64> {
    let mut out = Vec::with_capacity(obs.len() * Observation::feature_dim(cfg));
    for o in obs {
        o.write_features(cfg, &mut out);
    }
    out
}

/// Centralised training: roll out the behaviour policies, store transitions,
/// and update from uniform minibatches once the buffer is warm.
/// Episode `e` resets the environment with `derive_seed(seed, e)`.
pub fn train(
    cfg: &EnvConfig,
    tcfg: &TrainerConfig,
    learner: &mut dyn Learner,
    seed: u64,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    tcfg.validate()?;
    let mut env = Env::new(cfg.clone())?;
    let n = cfg.n_subnetworks;
    let d = Observation::feature_dim(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, LEARNER_STREAM));
    let mut buffer = ReplayBuffer::new(tcfg.buffer_capacity);
    let ready = tcfg.warmup.max(tcfg.batch_size);
    let mut metrics = Vec::with_capacity(tcfg.episodes);
    let mut env_steps = 0u64;
    let mut updates = 0u64;

    for episode in 0..tcfg.episodes {
        let ep_seed = derive_seed(seed, episode as u64);
        let obs = env.reset(ep_seed)?;
        let mut frame = joint_features(&obs, cfg);
        let mut history = History::new(frame.clone(), tcfg.k_hist);
        let mut reward_sum = 0.0;
        let mut ttis = 0usize;
        let mut stats: Vec<UpdateStats> = Vec::new();
        let outage = loop {
            let actions: Vec<usize> = (0..n).map(|i| learner.act(i, &frame[i * d..(i + 1) * d], &mut rng)).collect();
            let joint: Vec<Action> = actions.iter().map(|&a| Action::from_index(a, cfg)).collect();
            let step = env.step(&joint)?;
            let next = joint_features(&step.observations, cfg);
            reward_sum += step.rewards.iter().sum::<f64>();
            ttis += 1;
            buffer.push(Transition {
                frames: history.with_next(&next),
                actions,
                rewards: step.rewards.clone(),
                done: step.done,
            });
            history.push(next.clone());
            frame = next;
            env_steps += 1;
            if buffer.len() >= ready && env_steps % tcfg.update_every as u64 == 0 {
                for _ in 0..tcfg.updates_per_step {
                    let batch = buffer.sample(tcfg.batch_size, n, d, tcfg.k_hist, &mut rng);
                    match learner.update(&batch, &mut rng) {
                        Ok(s) => stats.push(s),
                        Err(e) => {
                            observer.on_abort(&e, learner, metrics.last());
                            return Err(e);
                        }
                    }
                    updates += 1;
                }
            }
            if step.done {
                break step.info.remaining_bits.iter().map(|&r| r > 0.0).collect::<Vec<bool>>();
            }
        };
        let mean = |f: fn(&UpdateStats) -> f64| (!stats.is_empty()).then(|| stats.iter().map(f).sum::<f64>() / stats.len() as f64);
        let row = EpisodeMetrics {
            schema: METRICS_SCHEMA,
            episode,
            seed: ep_seed,
            mean_reward: reward_sum / (n * ttis) as f64,
            episode_reward: reward_sum / n as f64,
            outage,
            updates,
            critic_loss: mean(|s| s.critic_loss),
            policy_loss: mean(|s| s.policy_loss),
            entropy: mean(|s| s.entropy),
        };
        observer.on_episode(&row, learner)?;
        log::debug!("episode {episode}: mean reward {:.4}", row.mean_reward);
        metrics.push(row);
    }
    Ok(TrainOutcome { metrics, buffer_len: buffer.len(), env_steps, updates })
}
