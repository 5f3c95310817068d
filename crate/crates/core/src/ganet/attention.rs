use rand::distr::Open01;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::GaNetConfig;
use crate::nn::{AttentionShape, Bound, Graph, Gru, Linear, Matrix, ParamStore, Var};

/// How the hard-attention mask is produced.
pub enum HardMode<'a> {
    /// Gumbel-softmax sample with straight-through gradients.
    Sample(&'a mut dyn RngCore),
    /// Noise-free argmax of the edge logits (evaluation).
    Argmax,
    /// Every neighbour kept.
    AllOnes,
    /// Caller-supplied mask in neighbour-slot layout.
    Fixed(Matrix),
}

/// Agent index of neighbour slot `t` for each agent: `slots[i][t]`.
pub fn neighbour_slots(n_agents: usize) -> Vec<Vec<usize>> {
    (0..n_agents).map(|i| (0..n_agents.saturating_sub(1)).map(|t| AttentionShape::neighbour(i, t)).collect()).collect()
}

/// Converts row block `b` of a slot-layout mask into an N × N matrix with zero diagonal.
pub fn slot_mask_to_square(mask: &Matrix, n_agents: usize, batch: usize, b: usize) -> Vec<Vec<f64>> {
    let mut sq = vec![vec![0.0; n_agents]; n_agents];
    for (i, row) in sq.iter_mut().enumerate() {
        for t in 0..n_agents.saturating_sub(1) {
            row[AttentionShape::neighbour(i, t)] = mask.get(i * batch + b, t);
        }
    }
    sq
}

pub fn sample_gumbel(rows: usize, cols: usize, rng: &mut dyn RngCore) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| {
        let u: f64 = rng.sample(Open01);
        -(-u.ln()).ln()
    })
}

/// Relaxed sample `softmax((logits + noise) / temperature)`.
pub fn gumbel_softmax(g: &mut Graph, logits: Var, temperature: f64, noise: Option<&Matrix>) -> Var {
    let shifted = match noise {
        Some(n) => {
            let nv = g.constant(n.clone());
            g.add(logits, nv)
        }
        None => logits,
    };
    let scaled = g.scale(shifted, 1.0 / temperature);
    g.softmax_rows(scaled)
}

/// BiGRU edge scorer over `[e_i ‖ e_j]` pairs ordered by neighbour index.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HardAttention {
    pub fwd: Gru,
    pub bwd: Gru,
    pub fc: Linear,
    pub hidden: usize,
}

impl HardAttention {
    pub fn new(cfg: &GaNetConfig, store: &mut ParamStore, rng: &mut impl Rng) -> Self {
        let c = cfg.code_dim;
        let h = cfg.hard_hidden;
        Self {
            fwd: Gru::new(store, "hard.fwd", 2 * c, h, rng),
            bwd: Gru::new(store, "hard.bwd", 2 * c, h, rng),
            fc: Linear::new(store, "hard.fc", 2 * h, 2, rng),
            hidden: h,
        }
    }

    /// Two-way edge logits per neighbour slot, each `R × 2`; column 0 means "keep".
    pub fn logits(&self, g: &mut Graph, p: &Bound, e: Var, n_agents: usize, batch: usize) -> Vec<Var> {
        let slots = n_agents.saturating_sub(1);
        let rows = n_agents * batch;
        let inputs: Vec<Var> = (0..slots)
            .map(|t| {
                let idx = (0..rows).map(|r| AttentionShape::neighbour(r / batch, t) * batch + r % batch).collect();
                let ej = g.gather_rows(e, idx);
                g.concat_cols(&[e, ej])
            })
            .collect();
        let zeros = Matrix::zeros(rows, self.hidden);
        let mut hf = g.constant(zeros.clone());
        let mut fwd_out = Vec::with_capacity(slots);
        for &x in &inputs {
            hf = self.fwd.step(g, p, x, hf);
            fwd_out.push(hf);
        }
        let mut hb = g.constant(zeros);
        let mut bwd_out = vec![hb; slots];
        for t in (0..slots).rev() {
            hb = self.bwd.step(g, p, inputs[t], hb);
            bwd_out[t] = hb;
        }
        (0..slots)
            .map(|t| {
                let h = g.concat_cols(&[fwd_out[t], bwd_out[t]]);
                self.fc.forward(g, p, h)
            })
            .collect()
    }

    /// Binary mask in slot layout (`R × (N-1)`) and the logits it came from.
    pub fn mask(
        &self,
        g: &mut Graph,
        p: &Bound,
        e: Var,
        n_agents: usize,
        batch: usize,
        temperature: f64,
        mode: HardMode<'_>,
    ) -> (Var, Vec<Var>) {
        let rows = n_agents * batch;
        let slots = n_agents.saturating_sub(1);
        match mode {
            HardMode::AllOnes => return (g.constant(Matrix::filled(rows, slots, 1.0)), Vec::new()),
            HardMode::Fixed(m) => {
                assert_eq!(m.shape(), (rows, slots), "fixed mask shape");
                return (g.constant(m), Vec::new());
            }
            _ => {}
        }
        if slots == 0 {
            return (g.constant(Matrix::zeros(rows, 0)), Vec::new());
        }
        let logits = self.logits(g, p, e, n_agents, batch);
        let mut rng = match mode {
            HardMode::Sample(r) => Some(r),
            _ => None,
        };
        let cols: Vec<Var> = logits
            .iter()
            .map(|&l| {
                let noise = rng.as_mut().map(|r| sample_gumbel(rows, 2, &mut **r));
                let soft = gumbel_softmax(g, l, temperature, noise.as_ref());
                let hard = g.straight_through(soft);
                g.slice_cols(hard, 0, 1)
            })
            .collect();
        (g.concat_cols(&cols), logits)
    }
}

/// Multi-head scaled dot-product attention over neighbour slots.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SoftAttention {
    pub wq: crate::nn::ParamId,
    pub wk: crate::nn::ParamId,
    pub wv: crate::nn::ParamId,
    pub heads: usize,
    pub head_dim: usize,
}

impl SoftAttention {
    /// `value_input` is the width of the per-agent value source.
    pub fn new(cfg: &GaNetConfig, value_input: usize, store: &mut ParamStore, rng: &mut impl Rng) -> Self {
        let d = cfg.embed_dim();
        let c = cfg.code_dim;
        let bq = 1.0 / (c as f64).sqrt();
        let bv = 1.0 / (value_input as f64).sqrt();
        Self {
            wq: store.add_uniform("attn.wq", c, d, bq, rng),
            wk: store.add_uniform("attn.wk", c, d, bq, rng),
            wv: store.add_uniform("attn.wv", value_input, d, bv, rng),
            heads: cfg.heads,
            head_dim: cfg.head_dim,
        }
    }

    pub fn shape(&self, n_agents: usize, batch: usize) -> AttentionShape {
        AttentionShape {
            n_agents,
            batch,
            heads: self.heads,
            key_dim: self.head_dim,
            value_dim: self.head_dim,
            scale: self.head_dim as f64,
        }
    }

    /// Concatenated per-head aggregates (before the nonlinearity).
    /// With `uniform` the queries are zero, so every kept neighbour gets equal weight.
    #[allow(clippy::too_many_arguments)]
    pub fn aggregate(
        &self,
        g: &mut Graph,
        p: &Bound,
        e: Var,
        value_src: Var,
        mask: Var,
        n_agents: usize,
        batch: usize,
        uniform: bool,
    ) -> Var {
        let q = if uniform {
            let rows = g.value(e).rows();
            g.constant(Matrix::zeros(rows, self.heads * self.head_dim))
        } else {
            g.matmul(e, p.var(self.wq))
        };
        let k = g.matmul(e, p.var(self.wk));
        let v = g.matmul(value_src, p.var(self.wv));
        g.masked_attention(q, k, v, mask, self.shape(n_agents, batch))
    }
}
