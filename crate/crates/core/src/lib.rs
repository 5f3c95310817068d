//! Simulation and multi-agent learning for interfering mobile subnetworks.
//!
//! The crate is organised bottom-up: [`simcore`] produces link gains,
//! [`env`] turns joint channel/power choices into rewards and observations,
//! [`ganet`] and [`masac`] implement the attention critic and the soft
//! actor-critic trainer, [`baselines`] holds the comparison policies and
//! [`eval`] runs experiments and renders plots.

pub mod error;
pub mod nn;
pub mod simcore;
pub mod env;
pub mod ganet;
pub mod masac;
pub mod baselines;
pub mod eval;

pub use error::{Error, Result};
