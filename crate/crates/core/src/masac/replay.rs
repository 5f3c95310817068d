use std::collections::VecDeque;

use rand::Rng;

use crate::ganet::CriticBatch;
use crate::nn::Matrix;

/// One joint environment step with the observation history needed by the critic.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    /// `k_hist + 1` joint frames (oldest first), each `N × obs_dim` row-major.
    /// Frames `0..k_hist` form the history of `s`, frames `1..=k_hist` that of `s'`.
    pub frames: Vec<f64>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    /// Last step of the episode.
    pub done: bool,
}

/// Ring buffer of transitions.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Transition>,
    cursor: usize,
}

/// Minibatch laid out for the networks (rows agent-major).
#[derive(Clone, Debug)]
pub struct SampledBatch {
    pub indices: Vec<usize>,
    pub current: CriticBatch,
    pub next_frames: Vec<Matrix>,
    /// `N·B × 1`.
    pub rewards: Matrix,
    pub done: Vec<bool>,
}

impl SampledBatch {
    pub fn batch(&self) -> usize {
        self.current.batch
    }

    pub fn current_obs(&self) -> &Matrix {
        self.current.frames.last().expect("frames")
    }

    pub fn next_obs(&self) -> &Matrix {
        self.next_frames.last().expect("frames")
    }
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, data: Vec::with_capacity(capacity.min(1 << 16)), cursor: 0 }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.data[i]
    }

    /// Uniform indices, distinct within the batch.
    pub fn sample_indices(&self, batch: usize, rng: &mut impl Rng) -> Vec<usize> {
        rand::seq::index::sample(rng, self.data.len(), batch.min(self.data.len())).into_vec()
    }

    pub fn sample(&self, batch: usize, n_agents: usize, obs_dim: usize, k_hist: usize, rng: &mut impl Rng) -> SampledBatch {
        let idx = self.sample_indices(batch, rng);
        self.gather(&idx, n_agents, obs_dim, k_hist)
    }

    pub fn gather(&self, idx: &[usize], n: usize, obs_dim: usize, k_hist: usize) -> SampledBatch {
        let b = idx.len();
        let frame = |f: usize| {
            let mut m = Matrix::zeros(n * b, obs_dim);
            for (col, &t) in idx.iter().enumerate() {
                let tr = &self.data[t];
                for i in 0..n {
                    let src = &tr.frames[(f * n + i) * obs_dim..(f * n + i + 1) * obs_dim];
                    m.row_mut(i * b + col).copy_from_slice(src);
                }
            }
            m
        };
        let all: Vec<Matrix> = (0..=k_hist).map(frame).collect();
        let mut actions = vec![0; n * b];
        let mut rewards = Matrix::zeros(n * b, 1);
        for (col, &t) in idx.iter().enumerate() {
            for i in 0..n {
                actions[i * b + col] = self.data[t].actions[i];
                rewards.set(i * b + col, 0, self.data[t].rewards[i]);
            }
        }
        SampledBatch {
            indices: idx.to_vec(),
            current: CriticBatch { batch: b, frames: all[..k_hist].to_vec(), actions },
            next_frames: all[1..].to_vec(),
            rewards,
            done: idx.iter().map(|&t| self.data[t].done).collect(),
        }
    }
}

/// Sliding window of joint observation features, padded with the reset frame.
#[derive(Clone, Debug)]
pub struct History {
    frames: VecDeque<Vec<f64>>,
    k_hist: usize,
}

impl History {
    pub fn new(reset_frame: Vec<f64>, k_hist: usize) -> Self {
        Self { frames: std::iter::repeat_n(reset_frame, k_hist).collect(), k_hist }
    }

    pub fn push(&mut self, frame: Vec<f64>) {
        self.frames.push_back(frame);
        while self.frames.len() > self.k_hist {
            self.frames.pop_front();
        }
    }

    pub fn current(&self) -> &[f64] {
        self.frames.back().expect("non-empty")
    }

    /// Current window followed by `next`, as stored in a [`Transition`].
    pub fn with_next(&self, next: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self.frames.iter().flat_map(|f| f.iter().copied()).collect();
        out.extend_from_slice(next);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(v: f64) -> Transition {
        Transition { frames: vec![v; 2 * 2 * 3], actions: vec![0, 1], rewards: vec![v, -v], done: false }
    }

    #[test]
    fn ring_overwrites_oldest() {
        let mut rb = ReplayBuffer::new(3);
        for v in 0..5 {
            rb.push(tr(v as f64));
        }
        assert_eq!(rb.len(), 3);
        let mut seen: Vec<f64> = (0..3).map(|i| rb.get(i).rewards[0]).collect();
        seen.sort_by(f64::total_cmp);
        assert_eq!(seen, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn batch_indices_are_distinct() {
        let mut rb = ReplayBuffer::new(100);
        for v in 0..100 {
            rb.push(tr(v as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut idx = rb.sample_indices(64, &mut rng);
        idx.sort_unstable();
        idx.dedup();
        assert_eq!(idx.len(), 64);
    }

    #[test]
    fn gather_lays_out_agent_major_rows() {
        let mut rb = ReplayBuffer::new(4);
        rb.push(Transition {
            frames: (0..12).map(f64::from).collect(),
            actions: vec![3, 4],
            rewards: vec![1.0, 2.0],
            done: true,
        });
        let b = rb.gather(&[0], 2, 3, 1);
        assert_eq!(b.current.frames[0].row(1), &[3.0, 4.0, 5.0]);
        assert_eq!(b.next_frames[0].row(0), &[6.0, 7.0, 8.0]);
        assert_eq!(b.current.actions, vec![3, 4]);
        assert_eq!(b.rewards.data(), &[1.0, 2.0]);
        assert!(b.done[0]);
    }

    #[test]
    fn history_pads_with_reset_frame() {
        let mut h = History::new(vec![0.0], 3);
        h.push(vec![1.0]);
        assert_eq!(h.with_next(&[2.0]), vec![0.0, 0.0, 1.0, 2.0]);
    }
}
