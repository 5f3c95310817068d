use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Index of a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamId(usize);

/// Named collection of trainable tensors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    /// Adds a tensor with entries uniform in `[-bound, bound]`.
    pub fn add_uniform(&mut self, name: impl Into<String>, rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> ParamId {
        let m = Matrix::from_fn(rows, cols, |_, _| if bound > 0.0 { rng.random_range(-bound..=bound) } else { 0.0 });
        self.add(name, m)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Matrix] {
        &mut self.values
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.values.iter().map(Matrix::shape).collect()
    }

    /// Registers every tensor as a trainable leaf.
    pub fn bind(&self, g: &mut Graph) -> Bound {
        Bound { vars: self.values.iter().map(|m| g.leaf(m.clone())).collect() }
    }

    /// Registers every tensor as a constant (no gradients).
    pub fn bind_const(&self, g: &mut Graph) -> Bound {
        Bound { vars: self.values.iter().map(|m| g.constant(m.clone())).collect() }
    }

    /// `self ← tau·self + (1 − tau)·online`.
    pub fn soft_update_from(&mut self, online: &ParamStore, tau: f64) -> Result<()> {
        if self.shapes() != online.shapes() {
            return Err(Error::Config("soft update between parameter sets of different shapes".into()));
        }
        for (t, o) in self.values.iter_mut().zip(&online.values) {
            for (x, y) in t.data_mut().iter_mut().zip(o.data()) {
                *x = tau * *x + (1.0 - tau) * y;
            }
        }
        Ok(())
    }

    pub fn copy_from(&mut self, other: &ParamStore) -> Result<()> {
        self.soft_update_from(other, 0.0)
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.values.iter().flat_map(|m| m.data().iter().copied()).collect()
    }

    /// Overwrites values from a flat slice laid out as by [`ParamStore::flatten`].
    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_scalars() {
            return Err(Error::Config(format!(
                "parameter blob holds {} values, expected {}",
                flat.len(),
                self.num_scalars()
            )));
        }
        let mut off = 0;
        for m in &mut self.values {
            let n = m.len();
            m.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(Matrix::is_finite)
    }
}

/// Graph handles for every tensor of a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Gradients in store order; parameters untouched by the loss get zeros.
    pub fn grads(&self, g: &Graph) -> Vec<Matrix> {
        self.vars
            .iter()
            .map(|&v| {
                g.grad(v).cloned().unwrap_or_else(|| {
                    let (r, c) = g.value(v).shape();
                    Matrix::zeros(r, c)
                })
            })
            .collect()
    }
}
