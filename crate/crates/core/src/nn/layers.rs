use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::matrix::Matrix;
use super::params::{Bound, ParamId, ParamStore};

/// Affine map `x·W + b` with `W` stored `in × out`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        Self::with_bound(store, name, input, output, bound, rng)
    }

    pub fn with_bound(store: &mut ParamStore, name: &str, input: usize, output: usize, bound: f64, rng: &mut impl Rng) -> Self {
        let w = store.add_uniform(format!("{name}.w"), input, output, bound, rng);
        let b = store.add_uniform(format!("{name}.b"), 1, output, bound, rng);
        Self { w, b, input, output }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Var {
        let y = g.matmul(x, p.var(self.w));
        g.add_row(y, p.var(self.b))
    }

    /// Graph-free evaluation.
    pub fn eval(&self, store: &ParamStore, x: &Matrix) -> Matrix {
        let mut y = x.matmul(store.get(self.w));
        let b = store.get(self.b).row(0).to_vec();
        for r in 0..y.rows() {
            for (v, bb) in y.row_mut(r).iter_mut().zip(&b) {
                *v += bb;
            }
        }
        y
    }
}

/// Stack of linear layers with ReLU between them (no activation on the last).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// `sizes = [in, h1, ..., out]`. `last_bound` overrides the init range of the final layer.
    pub fn new(store: &mut ParamStore, name: &str, sizes: &[usize], last_bound: Option<f64>, rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let nm = format!("{name}.{i}");
                match (i + 1 == n, last_bound) {
                    (true, Some(bd)) => Linear::with_bound(store, &nm, sizes[i], sizes[i + 1], bd, rng),
                    _ => Linear::new(store, &nm, sizes[i], sizes[i + 1], rng),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Var {
        let mut h = x;
        for (i, l) in self.layers.iter().enumerate() {
            h = l.forward(g, p, h);
            if i + 1 < self.layers.len() {
                h = g.relu(h);
            }
        }
        h
    }

    /// Graph-free evaluation.
    pub fn eval(&self, store: &ParamStore, x: &Matrix) -> Matrix {
        let mut h = x.clone();
        for (i, l) in self.layers.iter().enumerate() {
            h = l.eval(store, &h);
            if i + 1 < self.layers.len() {
                h = h.map(|v| v.max(0.0));
            }
        }
        h
    }

    pub fn output(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output)
    }
}

/// Gated recurrent unit cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Gru {
    pub wx: ParamId,
    pub wh: ParamId,
    pub bx: ParamId,
    pub bh: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl Gru {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let wx = store.add_uniform(format!("{name}.wx"), input, 3 * hidden, bound, rng);
        let wh = store.add_uniform(format!("{name}.wh"), hidden, 3 * hidden, bound, rng);
        let bx = store.add_uniform(format!("{name}.bx"), 1, 3 * hidden, bound, rng);
        let bh = store.add_uniform(format!("{name}.bh"), 1, 3 * hidden, bound, rng);
        Self { wx, wh, bx, bh, input, hidden }
    }

    /// One step: gates ordered (reset, update, candidate).
    pub fn step(&self, g: &mut Graph, p: &Bound, x: Var, h: Var) -> Var {
        let hd = self.hidden;
        let gx = g.matmul(x, p.var(self.wx));
        let gx = g.add_row(gx, p.var(self.bx));
        let gh = g.matmul(h, p.var(self.wh));
        let gh = g.add_row(gh, p.var(self.bh));
        let xr = g.slice_cols(gx, 0, hd);
        let hr = g.slice_cols(gh, 0, hd);
        let r = g.add(xr, hr);
        let r = g.sigmoid(r);
        let xz = g.slice_cols(gx, hd, hd);
        let hz = g.slice_cols(gh, hd, hd);
        let z = g.add(xz, hz);
        let z = g.sigmoid(z);
        let xn = g.slice_cols(gx, 2 * hd, hd);
        let hn = g.slice_cols(gh, 2 * hd, hd);
        let rn = g.mul(r, hn);
        let n = g.add(xn, rn);
        let n = g.tanh(n);
        let diff = g.sub(h, n);
        let zd = g.mul(z, diff);
        g.add(n, zd)
    }
}
