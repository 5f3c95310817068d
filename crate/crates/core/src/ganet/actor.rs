use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{argmax, softmax_in_place, Bound, Graph, Matrix, Mlp, ParamStore, Var};

/// Categorical distribution over a flat action index.
#[derive(Clone, Debug, PartialEq)]
pub struct Categorical {
    pub probs: Vec<f64>,
}

impl Categorical {
    pub fn from_logits(logits: &[f64]) -> Self {
        let mut probs = logits.to_vec();
        softmax_in_place(&mut probs);
        Self { probs }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }

    pub fn log_prob(&self, a: usize) -> f64 {
        self.probs[a].ln()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }

    pub fn entropy(&self) -> f64 {
        -self.probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }
}

/// Independent per-agent policy networks over local observations.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ActorNet {
    pub agents: Vec<Mlp>,
    pub obs_dim: usize,
    pub n_actions: usize,
}

impl ActorNet {
    pub fn new(
        n_agents: usize,
        obs_dim: usize,
        n_actions: usize,
        hidden: [usize; 2],
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Self {
        let agents = (0..n_agents)
            .map(|i| Mlp::new(store, &format!("pi{i}"), &[obs_dim, hidden[0], hidden[1], n_actions], Some(1e-3), rng))
            .collect();
        Self { agents, obs_dim, n_actions }
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    /// Log-probabilities for agent-major rows (`i·batch + b`), shape `N·B × A`.
    pub fn log_probs(&self, g: &mut Graph, p: &Bound, obs: Var, batch: usize) -> Var {
        let blocks: Vec<Var> = self
            .agents
            .iter()
            .enumerate()
            .map(|(i, mlp)| {
                let o = g.slice_rows(obs, i * batch, batch);
                mlp.forward(g, p, o)
            })
            .collect();
        let logits = g.concat_rows(&blocks);
        g.log_softmax_rows(logits)
    }

    /// Raw logits of one agent for a stack of observations.
    pub fn logits_plain(&self, store: &ParamStore, agent: usize, obs: &Matrix) -> Matrix {
        self.agents[agent].eval(store, obs)
    }

    /// Policy of one agent at one observation; consumes nothing but that observation.
    pub fn distribution(&self, store: &ParamStore, agent: usize, features: &[f64]) -> Categorical {
        let x = Matrix::from_vec(1, features.len(), features.to_vec());
        Categorical::from_logits(self.logits_plain(store, agent, &x).row(0))
    }
}
