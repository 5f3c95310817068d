use rand::Rng;
use serde::{Deserialize, Serialize};

use super::attention::{HardAttention, HardMode, SoftAttention};
use super::encoder::StateEncoder;
use super::{CriticVariant, GaNetConfig};
use crate::nn::{Bound, Graph, Linear, Matrix, ParamId, ParamStore, Var};

/// Joint inputs for a batch of `batch` states, rows agent-major (`i·batch + b`).
#[derive(Clone, Debug, PartialEq)]
pub struct CriticBatch {
    pub batch: usize,
    /// `k_hist` observation-feature blocks, oldest first; the last is the current observation.
    pub frames: Vec<Matrix>,
    /// Joint action index per row.
    pub actions: Vec<usize>,
}

/// Intermediate tensors of the attention stack.
#[derive(Clone, Debug)]
pub struct Embedding {
    /// State codes per history frame.
    pub codes: Vec<Var>,
    /// History-fused codes `e`.
    pub e: Var,
    /// Hard mask in neighbour-slot layout.
    pub mask: Var,
    /// Edge logits per slot (empty when the mask is not learned).
    pub logits: Vec<Var>,
    /// Concatenated head aggregates before the nonlinearity.
    pub heads: Var,
    /// Joint state embedding ĥ.
    pub h_hat: Var,
}

#[derive(Clone, Debug)]
pub struct CriticOutput {
    /// `Q_i(s, (a, a_{-i}))` for every own action `a`, shape `N·B × A`.
    pub q_table: Var,
    pub embedding: Option<Embedding>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct AgentHead {
    obs_in: Linear,
    act_emb: ParamId,
    fuse: Linear,
    fuse_embed: Option<ParamId>,
    out: Linear,
}

/// One critic per agent sharing the encoder and attention layers.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaNetCritic {
    pub cfg: GaNetConfig,
    encoder: Option<StateEncoder>,
    hard: Option<HardAttention>,
    soft: Option<SoftAttention>,
    heads: Vec<AgentHead>,
}

pub fn one_hot(indices: &[usize], n: usize) -> Matrix {
    let mut m = Matrix::zeros(indices.len(), n);
    for (r, &i) in indices.iter().enumerate() {
        m.set(r, i, 1.0);
    }
    m
}

impl GaNetCritic {
    pub fn new(cfg: GaNetConfig, store: &mut ParamStore, rng: &mut impl Rng) -> Self {
        let attends = cfg.variant != CriticVariant::Independent;
        let encoder = attends.then(|| StateEncoder::new(&cfg, store, rng));
        let hard = (cfg.variant == CriticVariant::Full).then(|| HardAttention::new(&cfg, store, rng));
        let soft = attends.then(|| SoftAttention::new(&cfg, cfg.code_dim + cfg.n_actions, store, rng));
        let h = cfg.critic_hidden;
        let f = cfg.critic_fuse;
        let in_bound = 1.0 / ((cfg.obs_dim + cfg.n_actions) as f64).sqrt();
        let heads = (0..cfg.n_agents)
            .map(|i| AgentHead {
                obs_in: Linear::with_bound(store, &format!("q{i}.obs"), cfg.obs_dim, h, in_bound, rng),
                act_emb: store.add_uniform(format!("q{i}.act"), cfg.n_actions, h, in_bound, rng),
                fuse: Linear::new(store, &format!("q{i}.fuse"), h, f, rng),
                fuse_embed: attends.then(|| {
                    let b = 1.0 / ((h + cfg.embed_dim()) as f64).sqrt();
                    store.add_uniform(format!("q{i}.fuse_embed"), cfg.embed_dim(), f, b, rng)
                }),
                out: Linear::new(store, &format!("q{i}.out"), f, 1, rng),
            })
            .collect();
        Self { cfg, encoder, hard, soft, heads }
    }

    /// Width of the information each agent's critic consumes per state.
    pub fn input_width(&self) -> usize {
        let own = self.cfg.obs_dim + self.cfg.n_actions;
        match self.cfg.variant {
            CriticVariant::Independent => own,
            _ => own + self.cfg.embed_dim(),
        }
    }

    pub fn encoder(&self) -> Option<&StateEncoder> {
        self.encoder.as_ref()
    }

    pub fn hard_attention(&self) -> Option<&HardAttention> {
        self.hard.as_ref()
    }

    /// Runs the attention stack. `mode` is ignored unless the variant learns a hard mask.
    #[allow(clippy::too_many_arguments)]
    pub fn embed(
        &self,
        g: &mut Graph,
        p: &Bound,
        frames: &[Var],
        actions_onehot: Var,
        batch: usize,
        mode: HardMode<'_>,
    ) -> Option<Embedding> {
        let enc = self.encoder.as_ref()?;
        self.soft.as_ref()?;
        let n = self.cfg.n_agents;
        let (codes, e) = enc.encode_history(g, p, frames);
        let (mask, logits) = match (&self.hard, mode) {
            (_, HardMode::Fixed(m)) => (g.constant(m), Vec::new()),
            (Some(h), mode) => h.mask(g, p, e, n, batch, self.cfg.gumbel_temperature, mode),
            (None, _) => {
                let rows = n * batch;
                (g.constant(Matrix::filled(rows, n.saturating_sub(1), 1.0)), Vec::new())
            }
        };
        Some(self.aggregate(g, p, codes, e, actions_onehot, mask, logits, batch))
    }

    /// Soft attention and head nonlinearity given codes and a mask.
    #[allow(clippy::too_many_arguments)]
    pub fn aggregate(
        &self,
        g: &mut Graph,
        p: &Bound,
        codes: Vec<Var>,
        e: Var,
        actions_onehot: Var,
        mask: Var,
        logits: Vec<Var>,
        batch: usize,
    ) -> Embedding {
        let soft = self.soft.as_ref().expect("attention critic");
        let value_src = g.concat_cols(&[e, actions_onehot]);
        let uniform = self.cfg.variant == CriticVariant::NoAttn;
        let heads = soft.aggregate(g, p, e, value_src, mask, self.cfg.n_agents, batch, uniform);
        let h_hat = g.leaky_relu(heads, self.cfg.leaky_slope);
        Embedding { codes, e, mask, logits, heads, h_hat }
    }

    /// Q values for every own action given current observations and (optionally) ĥ.
    pub fn q_table(&self, g: &mut Graph, p: &Bound, obs: Var, h_hat: Option<Var>, batch: usize) -> Var {
        let a = self.cfg.n_actions;
        let rep: Vec<usize> = (0..batch).flat_map(|r| std::iter::repeat_n(r, a)).collect();
        let acts: Vec<usize> = (0..batch).flat_map(|_| 0..a).collect();
        let blocks: Vec<Var> = self
            .heads
            .iter()
            .enumerate()
            .map(|(i, head)| {
                let o = g.slice_rows(obs, i * batch, batch);
                let x = head.obs_in.forward(g, p, o);
                let xe = g.gather_rows(x, rep.clone());
                let ae = g.gather_rows(p.var(head.act_emb), acts.clone());
                let f = g.add(xe, ae);
                let f = g.relu(f);
                let mut z = head.fuse.forward(g, p, f);
                if let (Some(h), Some(w)) = (h_hat, head.fuse_embed) {
                    let hi = g.slice_rows(h, i * batch, batch);
                    let hw = g.matmul(hi, p.var(w));
                    let hw = g.gather_rows(hw, rep.clone());
                    z = g.add(z, hw);
                }
                let z = g.relu(z);
                let q = head.out.forward(g, p, z);
                g.reshape(q, batch, a)
            })
            .collect();
        g.concat_rows(&blocks)
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, batch: &CriticBatch, mode: HardMode<'_>) -> CriticOutput {
        let frames: Vec<Var> = batch.frames.iter().map(|f| g.constant(f.clone())).collect();
        let onehot = g.constant(one_hot(&batch.actions, self.cfg.n_actions));
        let embedding = self.embed(g, p, &frames, onehot, batch.batch, mode);
        let obs = *frames.last().expect("at least one frame");
        let q_table = self.q_table(g, p, obs, embedding.as_ref().map(|e| e.h_hat), batch.batch);
        CriticOutput { q_table, embedding }
    }
}
