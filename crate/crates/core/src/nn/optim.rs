use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::params::ParamStore;

/// Adam with optional global-norm gradient clipping.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: Option<f64>,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = store.values().iter().map(|m| vec![0.0; m.len()]).collect();
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, clip_norm: None, t: 0, m: zeros.clone(), v: zeros }
    }

    pub fn with_clip(mut self, clip_norm: Option<f64>) -> Self {
        self.clip_norm = clip_norm;
        self
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one descent step. Returns the pre-clip global gradient norm.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Matrix]) -> f64 {
        assert_eq!(grads.len(), store.len(), "gradient count mismatch");
        let norm = grads.iter().flat_map(|g| g.data()).map(|x| x * x).sum::<f64>().sqrt();
        let k = match self.clip_norm {
            Some(c) if norm > c && norm > 0.0 => c / norm,
            _ => 1.0,
        };
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, g), m), v) in store.values_mut().iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((x, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                let gi = gi * k;
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let mh = *mi / bc1;
                let vh = *vi / bc2;
                *x -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut s = ParamStore::new();
        s.add("w", Matrix::from_vec(1, 2, vec![1.0, -1.0]));
        let mut opt = Adam::new(&s, 0.1);
        opt.step(&mut s, &[Matrix::from_vec(1, 2, vec![3.0, -0.5])]);
        let w = s.values()[0].data();
        assert!((w[0] - 0.9).abs() < 1e-6);
        assert!((w[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn minimises_quadratic() {
        let mut s = ParamStore::new();
        s.add("w", Matrix::from_vec(1, 1, vec![5.0]));
        let mut opt = Adam::new(&s, 0.05);
        for _ in 0..2000 {
            let w = s.values()[0].get(0, 0);
            opt.step(&mut s, &[Matrix::from_vec(1, 1, vec![2.0 * (w - 2.0)])]);
        }
        assert!((s.values()[0].get(0, 0) - 2.0).abs() < 1e-3);
    }
}
