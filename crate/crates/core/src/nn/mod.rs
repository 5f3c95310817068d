//! Minimal dense neural-network toolkit: matrices, a gradient tape, layers and Adam.

mod graph;
mod layers;
mod matrix;
mod optim;
mod params;

pub use graph::{argmax, sigmoid, softmax_in_place, AttentionShape, Graph, Var};
pub use layers::{Gru, Linear, Mlp};
pub use matrix::{order_invariant_sum, Matrix};
pub use optim::Adam;
pub use params::{Bound, ParamId, ParamStore};
