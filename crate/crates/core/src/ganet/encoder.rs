use rand::Rng;
use serde::{Deserialize, Serialize};

use super::GaNetConfig;
use crate::nn::{Bound, Graph, Gru, Mlp, ParamStore, Var};

/// Observation MLP followed by a GRU over the last `k_hist` state codes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateEncoder {
    pub mlp: Mlp,
    pub gru: Gru,
    pub code_dim: usize,
}

impl StateEncoder {
    pub fn new(cfg: &GaNetConfig, store: &mut ParamStore, rng: &mut impl Rng) -> Self {
        let c = cfg.code_dim;
        Self {
            mlp: Mlp::new(store, "enc", &[cfg.obs_dim, c, c], None, rng),
            gru: Gru::new(store, "hist", c, c, rng),
            code_dim: c,
        }
    }

    /// State code `s` for every row of `obs`.
    pub fn encode(&self, g: &mut Graph, p: &Bound, obs: Var) -> Var {
        self.mlp.forward(g, p, obs)
    }

    /// Final GRU state over `codes` (oldest first), starting from zeros.
    pub fn fuse_history(&self, g: &mut Graph, p: &Bound, codes: &[Var]) -> Var {
        assert!(!codes.is_empty(), "history must hold at least one code");
        let rows = g.value(codes[0]).rows();
        let mut h = g.constant(crate::nn::Matrix::zeros(rows, self.code_dim));
        for &c in codes {
            h = self.gru.step(g, p, c, h);
        }
        h
    }

    /// Encodes a stacked history (`frames` blocks of equal height, oldest first)
    /// with one batched MLP pass, then fuses it.
    pub fn encode_history(&self, g: &mut Graph, p: &Bound, frames: &[Var]) -> (Vec<Var>, Var) {
        let rows = g.value(frames[0]).rows();
        let stacked = g.concat_rows(frames);
        let codes = self.encode(g, p, stacked);
        let per: Vec<Var> = (0..frames.len()).map(|t| g.slice_rows(codes, t * rows, rows)).collect();
        let e = self.fuse_history(g, p, &per);
        (per, e)
    }
}
