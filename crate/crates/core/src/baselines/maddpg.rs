use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ganet::{gumbel_softmax, one_hot, sample_gumbel, ActorNet, GaNetConfig};
use crate::masac::{actor_log_probs, sample_rows, ActorCheckpoint, CheckpointFile, Learner, SampledBatch, TerminalMode, TrainerConfig, UpdateStats};
use crate::masac::{td_target, ActorArch};
use crate::nn::{Adam, Bound, Graph, Matrix, Mlp, ParamStore, Var};
use crate::simcore::EnvConfig;

/// Centralised critic over concatenated observations and actions of all
/// agents, actors trained through a straight-through Gumbel-softmax relaxation.
pub struct MaddpgLearner {
    pub tcfg: TrainerConfig,
    pub n_agents: usize,
    pub obs_dim: usize,
    pub n_actions: usize,
    pub hidden: [usize; 2],
    pub critics: Vec<Mlp>,
    pub critic_params: ParamStore,
    pub critic_target: ParamStore,
    pub actor: ActorNet,
    pub actor_params: ParamStore,
    pub actor_target: ParamStore,
    critic_opt: Adam,
    actor_opt: Adam,
    updates: u64,
}

impl MaddpgLearner {
    pub fn new(env: &EnvConfig, tcfg: &TrainerConfig, rng: &mut ChaCha8Rng) -> Self {
        let net = GaNetConfig::for_env(env, crate::ganet::CriticVariant::Independent);
        let (n, d, a) = (net.n_agents, net.obs_dim, net.n_actions);
        let hidden = net.actor_hidden;
        let mut critic_params = ParamStore::new();
        let critics = (0..n)
            .map(|i| Mlp::new(&mut critic_params, &format!("mq{i}"), &[n * (d + a), hidden[0], hidden[1], 1], None, rng))
            .collect();
        let mut actor_params = ParamStore::new();
        let actor = ActorNet::new(n, d, a, hidden, &mut actor_params, rng);
        Self {
            critic_opt: Adam::new(&critic_params, tcfg.lr_critic).with_clip(tcfg.grad_clip),
            actor_opt: Adam::new(&actor_params, tcfg.lr_actor).with_clip(tcfg.grad_clip),
            critic_target: critic_params.clone(),
            actor_target: actor_params.clone(),
            tcfg: tcfg.clone(),
            n_agents: n,
            obs_dim: d,
            n_actions: a,
            hidden,
            critics,
            critic_params,
            actor,
            actor_params,
            updates: 0,
        }
    }

    /// Width of each critic's input row.
    pub fn critic_input_width(&self) -> usize {
        self.n_agents * (self.obs_dim + self.n_actions)
    }

    /// `B × N(obs+A)` rows `[o_0 ‖ a_0 ‖ … ‖ o_{N−1} ‖ a_{N−1}]`.
    pub fn critic_input(&self, g: &mut Graph, obs: Var, actions: &[Var], batch: usize) -> Var {
        let mut parts = Vec::with_capacity(2 * self.n_agents);
        for (i, &a) in actions.iter().enumerate() {
            parts.push(g.slice_rows(obs, i * batch, batch));
            parts.push(a);
        }
        g.concat_cols(&parts)
    }

    /// `B × 1` value of critic `agent`.
    pub fn q_value(&self, g: &mut Graph, p: &Bound, agent: usize, input: Var) -> Var {
        self.critics[agent].forward(g, p, input)
    }

    fn onehot_blocks(&self, g: &mut Graph, actions: &[usize], batch: usize) -> Vec<Var> {
        (0..self.n_agents)
            .map(|i| g.constant(one_hot(&actions[i * batch..(i + 1) * batch], self.n_actions)))
            .collect()
    }

    /// Targets from target critics at target-actor Gumbel-max actions.
    pub fn critic_targets(&self, batch: &SampledBatch, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let b = batch.batch();
        let logp = actor_log_probs(&self.actor, &self.actor_target, batch.next_obs(), b);
        let next = sample_rows(&logp, rng);
        let mut g = Graph::new();
        let p = self.critic_target.bind_const(&mut g);
        let obs = g.constant(batch.next_obs().clone());
        let acts = self.onehot_blocks(&mut g, &next, b);
        let input = self.critic_input(&mut g, obs, &acts, b);
        let mut y = Vec::with_capacity(self.n_agents * b);
        for i in 0..self.n_agents {
            let q = self.q_value(&mut g, &p, i, input);
            let qv = g.value(q).clone();
            for r in 0..b {
                let terminal = self.tcfg.terminal == TerminalMode::Terminal && batch.done[r];
                y.push(td_target(batch.rewards.get(i * b + r, 0), self.tcfg.gamma, terminal, qv.get(r, 0)));
            }
        }
        y
    }

    /// Actor objective `−Σ_i mean_b Q_i(s, ã_i, a_{\i})` with `ã_i` relaxed.
    /// `noise` supplies the Gumbel perturbation (`N·B × A`); other agents act
    /// through `others` (agent-major indices).
    pub fn actor_objective(&self, g: &mut Graph, pa: &Bound, pc: &Bound, obs: &Matrix, others: &[usize], noise: &Matrix, batch: usize) -> Var {
        let a = self.n_actions;
        let ov = g.constant(obs.clone());
        let fixed = self.onehot_blocks(g, others, batch);
        let mut total: Option<Var> = None;
        for i in 0..self.n_agents {
            let oi = g.slice_rows(ov, i * batch, batch);
            let logits = self.actor.agents[i].forward(g, pa, oi);
            let ni = Matrix::from_vec(batch, a, noise.data()[i * batch * a..(i + 1) * batch * a].to_vec());
            let soft = gumbel_softmax(g, logits, self.tcfg.gumbel_temperature, Some(&ni));
            let relaxed = g.straight_through(soft);
            let mut acts = fixed.clone();
            acts[i] = relaxed;
            let input = self.critic_input(g, ov, &acts, batch);
            let q = self.q_value(g, pc, i, input);
            let m = g.mean_all(q);
            total = Some(match total {
                Some(t) => g.add(t, m),
                None => m,
            });
        }
        let t = total.expect("at least one agent");
        g.scale(t, -1.0)
    }
}

impl Learner for MaddpgLearner {
    fn variant_name(&self) -> &str {
        "maddpg"
    }

    fn n_agents(&self) -> usize {
        self.n_agents
    }

    fn act(&self, agent: usize, features: &[f64], rng: &mut ChaCha8Rng) -> usize {
        self.actor.distribution(&self.actor_params, agent, features).sample(rng)
    }

    fn update(&mut self, batch: &SampledBatch, rng: &mut ChaCha8Rng) -> Result<UpdateStats> {
        let b = batch.batch();
        let y = self.critic_targets(batch, rng);

        let mut g = Graph::new();
        let p = self.critic_params.bind(&mut g);
        let obs = g.constant(batch.current_obs().clone());
        let acts = self.onehot_blocks(&mut g, &batch.current.actions, b);
        let input = self.critic_input(&mut g, obs, &acts, b);
        let qs: Vec<Var> = (0..self.n_agents).map(|i| self.q_value(&mut g, &p, i, input)).collect();
        let q = g.concat_rows(&qs);
        let yv = g.constant(Matrix::from_vec(y.len(), 1, y));
        let diff = g.sub(q, yv);
        let sq = g.mul(diff, diff);
        let sum = g.sum_all(sq);
        let loss = g.scale(sum, 1.0 / b as f64);
        let critic_loss = g.value(loss).get(0, 0);
        if !critic_loss.is_finite() {
            return Err(Error::NonFinite { what: "critic loss".into(), update: self.updates });
        }
        g.backward(loss);
        let grads = p.grads(&g);
        self.critic_opt.step(&mut self.critic_params, &grads);

        let logp = actor_log_probs(&self.actor, &self.actor_params, batch.current_obs(), b);
        let others = sample_rows(&logp, rng);
        let noise = sample_gumbel(self.n_agents * b, self.n_actions, rng);
        let mut g = Graph::new();
        let pa = self.actor_params.bind(&mut g);
        let pc = self.critic_params.bind_const(&mut g);
        let obj = self.actor_objective(&mut g, &pa, &pc, batch.current_obs(), &others, &noise, b);
        let policy_loss = g.value(obj).get(0, 0);
        if !policy_loss.is_finite() {
            return Err(Error::NonFinite { what: "policy loss".into(), update: self.updates });
        }
        g.backward(obj);
        let grads = pa.grads(&g);
        self.actor_opt.step(&mut self.actor_params, &grads);

        self.critic_target.soft_update_from(&self.critic_params, self.tcfg.tau)?;
        self.actor_target.soft_update_from(&self.actor_params, self.tcfg.tau)?;
        self.updates += 1;
        let rows = logp.rows();
        let entropy = (0..rows).map(|r| -logp.row(r).iter().map(|l| l.exp() * l).sum::<f64>()).sum::<f64>() / rows as f64;
        Ok(UpdateStats { critic_loss, policy_loss, entropy })
    }

    fn actor_checkpoint(&self, env: &EnvConfig) -> ActorCheckpoint {
        ActorCheckpoint::new(env, "maddpg", &self.actor, &self.actor_target, self.hidden)
    }

    fn full_checkpoint(&self, env: &EnvConfig) -> Result<CheckpointFile> {
        let arch = serde_json::json!({
            "actor": ActorArch { n_agents: self.n_agents, obs_dim: self.obs_dim, n_actions: self.n_actions, hidden: self.hidden },
            "critic_input": self.critic_input_width(),
            "trainer": self.tcfg,
        });
        Ok(CheckpointFile::new(
            "full",
            "maddpg",
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
