use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{ActorCheckpoint, CheckpointFile};
use super::config::{PolicyMode, TargetMode, TerminalMode, TrainerConfig};
use super::replay::SampledBatch;
use super::targets::{counterfactual_baseline, joint_index, soft_value_joint, soft_value_own, td_target};
use crate::error::{Error, Result};
use crate::ganet::{ActorNet, Categorical, CriticBatch, CriticVariant, GaNetConfig, GaNetCritic, HardMode};
use crate::nn::{Adam, Graph, Matrix, ParamStore};
use crate::simcore::EnvConfig;

/// Losses and diagnostics of one gradient update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub policy_loss: f64,
    pub entropy: f64,
}

/// A trainable multi-agent policy with decentralised actors.
pub trait Learner {
    fn variant_name(&self) -> &str;
    fn n_agents(&self) -> usize;
    /// Behaviour action of one agent from its own observation features.
    fn act(&self, agent: usize, features: &[f64], rng: &mut ChaCha8Rng) -> usize;
    fn update(&mut self, batch: &SampledBatch, rng: &mut ChaCha8Rng) -> Result<UpdateStats>;
    /// Target actors packaged for decentralised execution.
    fn actor_checkpoint(&self, env: &EnvConfig) -> ActorCheckpoint;
    /// Every parameter set, for archival.
    fn full_checkpoint(&self, env: &EnvConfig) -> Result<CheckpointFile>;
}

/// Log-probabilities of every agent-major row under plain (graph-free) actor evaluation.
pub fn actor_log_probs(actor: &ActorNet, params: &ParamStore, obs: &Matrix, batch: usize) -> Matrix {
    let a = actor.n_actions;
    let mut out = Matrix::zeros(obs.rows(), a);
    for i in 0..actor.n_agents() {
        let block = Matrix::from_vec(batch, obs.cols(), obs.data()[i * batch * obs.cols()..(i + 1) * batch * obs.cols()].to_vec());
        let logits = actor.logits_plain(params, i, &block);
        for b in 0..batch {
            let row = logits.row(b);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            for (dst, x) in out.row_mut(i * batch + b).iter_mut().zip(row) {
                *dst = x - lse;
            }
        }
    }
    out
}

pub fn sample_rows(log_probs: &Matrix, rng: &mut impl Rng) -> Vec<usize> {
    (0..log_probs.rows())
        .map(|r| Categorical { probs: log_probs.row(r).iter().map(|l| l.exp()).collect() }.sample(rng))
        .collect()
}

fn check_finite(v: f64, what: &str, update: u64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { what: what.to_string(), update })
    }
}

/// Soft actor-critic with per-agent critics sharing an attention stack.
pub struct MasacLearner {
    pub tcfg: TrainerConfig,
    pub net: GaNetConfig,
    pub critic: GaNetCritic,
    pub critic_params: ParamStore,
    pub critic_target: ParamStore,
    pub actor: ActorNet,
    pub actor_params: ParamStore,
    pub actor_target: ParamStore,
    critic_opt: Adam,
    actor_opt: Adam,
    updates: u64,
    name: String,
}

impl MasacLearner {
    pub fn new(env: &EnvConfig, tcfg: &TrainerConfig, variant: CriticVariant, rng: &mut ChaCha8Rng) -> Self {
        let mut net = GaNetConfig::for_env(env, variant);
        net.k_hist = tcfg.k_hist;
        net.gumbel_temperature = tcfg.gumbel_temperature;
        let mut critic_params = ParamStore::new();
        let critic = GaNetCritic::new(net.clone(), &mut critic_params, rng);
        let mut actor_params = ParamStore::new();
        let actor = ActorNet::new(net.n_agents, net.obs_dim, net.n_actions, net.actor_hidden, &mut actor_params, rng);
        let name = match variant {
            CriticVariant::Full => "ganet_full",
            CriticVariant::NoHard => "ganet_no_hard",
            CriticVariant::NoAttn => "ganet_no_attn",
            CriticVariant::Independent => "independent_ac",
        };
        Self {
            critic_opt: Adam::new(&critic_params, tcfg.lr_critic).with_clip(tcfg.grad_clip),
            actor_opt: Adam::new(&actor_params, tcfg.lr_actor).with_clip(tcfg.grad_clip),
            critic_target: critic_params.clone(),
            actor_target: actor_params.clone(),
            tcfg: tcfg.clone(),
            net,
            critic,
            critic_params,
            actor,
            actor_params,
            updates: 0,
            name: name.to_string(),
        }
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    fn hard_mode<'a>(&self, rng: &'a mut ChaCha8Rng) -> HardMode<'a> {
        HardMode::Sample(rng)
    }

    /// Q tables (`N·B × A`) of a parameter set at given histories and joint actions.
    pub fn q_tables(&self, params: &ParamStore, frames: &[Matrix], actions: &[usize], batch: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let mut g = Graph::new();
        let p = params.bind_const(&mut g);
        let cb = CriticBatch { batch, frames: frames.to_vec(), actions: actions.to_vec() };
        let out = self.critic.forward(&mut g, &p, &cb, self.hard_mode(rng));
        g.value(out.q_table).clone()
    }

    /// Soft TD targets `y` (`N·B` values) computed with target networks only.
    pub fn critic_targets(&self, batch: &SampledBatch, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = self.net.n_agents;
        let a = self.net.n_actions;
        let b = batch.batch();
        let alpha = self.tcfg.alpha;
        let logp = actor_log_probs(&self.actor, &self.actor_target, batch.next_obs(), b);
        let probs: Vec<Vec<f64>> = (0..n * b).map(|r| logp.row(r).iter().map(|l| l.exp()).collect()).collect();
        let joint_size = a.checked_pow(n as u32).unwrap_or(usize::MAX);
        let mut values = vec![0.0; n * b];
        match self.tcfg.target_mode {
            TargetMode::Exact if joint_size <= self.tcfg.exact_joint_limit => {
                let mut q_joint = vec![vec![0.0; joint_size]; n * b];
                for idx in 0..joint_size {
                    let joint = super::targets::joint_actions(idx, n, a);
                    let actions: Vec<usize> = (0..n * b).map(|r| joint[r / b]).collect();
                    let q = self.q_tables(&self.critic_target, &batch.next_frames, &actions, b, rng);
                    for r in 0..n * b {
                        q_joint[r][joint_index(&joint, a)] = q.get(r, joint[r / b]);
                    }
                }
                for r in 0..n * b {
                    let (i, col) = (r / b, r % b);
                    let pols: Vec<&[f64]> = (0..n).map(|j| probs[j * b + col].as_slice()).collect();
                    values[r] = soft_value_joint(&q_joint[r], &pols, i, alpha);
                }
            }
            mode => {
                let next_actions = sample_rows(&logp, rng);
                let q = self.q_tables(&self.critic_target, &batch.next_frames, &next_actions, b, rng);
                for r in 0..n * b {
                    values[r] = match mode {
                        TargetMode::Exact => soft_value_own(q.row(r), &probs[r], alpha),
                        TargetMode::Sampled => q.get(r, next_actions[r]) - alpha * logp.get(r, next_actions[r]),
                    };
                }
            }
        }
        (0..n * b)
            .map(|r| {
                let terminal = self.tcfg.terminal == TerminalMode::Terminal && batch.done[r % b];
                td_target(batch.rewards.get(r, 0), self.tcfg.gamma, terminal, values[r])
            })
            .collect()
    }

    /// One critic regression step towards `targets`; returns the loss before the step.
    pub fn critic_step(&mut self, batch: &SampledBatch, targets: &[f64], rng: &mut ChaCha8Rng) -> Result<f64> {
        let b = batch.batch();
        let mut g = Graph::new();
        let p = self.critic_params.bind(&mut g);
        let out = self.critic.forward(&mut g, &p, &batch.current, HardMode::Sample(rng));
        let q = g.pick_cols(out.q_table, batch.current.actions.clone());
        let y = g.constant(Matrix::from_vec(targets.len(), 1, targets.to_vec()));
        let diff = g.sub(q, y);
        let sq = g.mul(diff, diff);
        let total = g.sum_all(sq);
        let loss = g.scale(total, 1.0 / b as f64);
        let value = g.value(loss).get(0, 0);
        check_finite(value, "critic loss", self.updates)?;
        g.backward(loss);
        let grads = p.grads(&g);
        self.critic_opt.step(&mut self.critic_params, &grads);
        Ok(value)
    }

    /// One policy step with joint actions freshly drawn from the current policies.
    /// Returns `(surrogate loss, mean entropy)`.
    pub fn policy_step(&mut self, batch: &SampledBatch, rng: &mut ChaCha8Rng) -> Result<(f64, f64)> {
        let b = batch.batch();
        let rows = self.net.n_agents * b;
        let obs = batch.current_obs().clone();
        let logp_plain = actor_log_probs(&self.actor, &self.actor_params, &obs, b);
        let fresh = sample_rows(&logp_plain, rng);
        let q = self.q_tables(&self.critic_params, &batch.current.frames, &fresh, b, rng);
        let mut g = Graph::new();
        let p = self.actor_params.bind(&mut g);
        let ov = g.constant(obs);
        let logp = self.actor.log_probs(&mut g, &p, ov, b);
        let alpha = self.tcfg.alpha;
        let loss = match self.tcfg.policy_mode {
            PolicyMode::Sampled => {
                let weights: Vec<f64> = (0..rows)
                    .map(|r| {
                        let probs: Vec<f64> = logp_plain.row(r).iter().map(|l| l.exp()).collect();
                        let baseline = counterfactual_baseline(q.row(r), &probs);
                        -alpha * logp_plain.get(r, fresh[r]) + q.get(r, fresh[r]) - baseline
                    })
                    .collect();
                sampled_surrogate(&mut g, logp, &fresh, &weights, b)
            }
            PolicyMode::Exact => {
                let adv = Matrix::from_fn(rows, self.net.n_actions, |r, c| {
                    let probs: Vec<f64> = logp_plain.row(r).iter().map(|l| l.exp()).collect();
                    q.get(r, c) - counterfactual_baseline(q.row(r), &probs)
                });
                exact_objective(&mut g, logp, &adv, alpha, b)
            }
        };
        let value = g.value(loss).get(0, 0);
        check_finite(value, "policy loss", self.updates)?;
        g.backward(loss);
        let grads = p.grads(&g);
        self.actor_opt.step(&mut self.actor_params, &grads);
        let entropy = (0..rows)
            .map(|r| -logp_plain.row(r).iter().map(|l| l.exp() * l).sum::<f64>())
            .sum::<f64>()
            / rows as f64;
        Ok((value, entropy))
    }

    pub fn soft_update(&mut self) -> Result<()> {
        self.critic_target.soft_update_from(&self.critic_params, self.tcfg.tau)?;
        self.actor_target.soft_update_from(&self.actor_params, self.tcfg.tau)
    }
}

/// `−Σ_i mean_b[log π(â)·w]` with `w` held constant.
pub fn sampled_surrogate(g: &mut Graph, logp: crate::nn::Var, actions: &[usize], weights: &[f64], batch: usize) -> crate::nn::Var {
    let picked = g.pick_cols(logp, actions.to_vec());
    let w = g.constant(Matrix::from_vec(weights.len(), 1, weights.to_vec()));
    let prod = g.mul(picked, w);
    let total = g.sum_all(prod);
    g.scale(total, -1.0 / batch as f64)
}

/// `−Σ_i mean_b[Σ_a π(a)·A(a) − α·Σ_a π(a) log π(a)]` with `A` held constant.
pub fn exact_objective(g: &mut Graph, logp: crate::nn::Var, adv: &Matrix, alpha: f64, batch: usize) -> crate::nn::Var {
    let pi = g.exp(logp);
    let av = g.constant(adv.clone());
    let gain = g.mul(pi, av);
    let ent = g.mul(pi, logp);
    let ent = g.scale(ent, -alpha);
    let j = g.add(gain, ent);
    let total = g.sum_all(j);
    g.scale(total, -1.0 / batch as f64)
}

impl Learner for MasacLearner {
    fn variant_name(&self) -> &str {
        &self.name
    }

    fn n_agents(&self) -> usize {
        self.net.n_agents
    }

    fn act(&self, agent: usize, features: &[f64], rng: &mut ChaCha8Rng) -> usize {
        self.actor.distribution(&self.actor_params, agent, features).sample(rng)
    }

    fn update(&mut self, batch: &SampledBatch, rng: &mut ChaCha8Rng) -> Result<UpdateStats> {
        let y = self.critic_targets(batch, rng);
        let critic_loss = self.critic_step(batch, &y, rng)?;
        let (policy_loss, entropy) = self.policy_step(batch, rng)?;
        self.soft_update()?;
        self.updates += 1;
        Ok(UpdateStats { critic_loss, policy_loss, entropy })
    }

    fn actor_checkpoint(&self, env: &EnvConfig) -> ActorCheckpoint {
        ActorCheckpoint::new(env, &self.name, &self.actor, &self.actor_target, self.net.actor_hidden)
    }

    fn full_checkpoint(&self, env: &EnvConfig) -> Result<CheckpointFile> {
        let arch = serde_json::json!({
            "actor": super::checkpoint::ActorArch {
                n_agents: self.net.n_agents,
                obs_dim: self.net.obs_dim,
                n_actions: self.net.n_actions,
                hidden: self.net.actor_hidden,
            },
            "critic": self.net,
            "trainer": self.tcfg,
        });
        Ok(CheckpointFile::new(
            "full",
            &self.name,
            env,
            arch,
            &[
                ("critic", &self.critic_params),
                ("critic_target", &self.critic_target),
                ("actor", &self.actor_params),
                ("actor_target", &self.actor_target),
            ],
        ))
    }
}
