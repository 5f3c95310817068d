//! The partially observable Markov game over interfering subnetworks.

mod physics;
mod trace;
mod types;

pub use physics::{
    capacity_bps, completion_reward, compute_rssi, max_normalized_rate, own_signal, reward, sinr_from_rssi, Rssi,
};
pub use trace::{read_trace, write_trace, TraceRecord};
pub use types::{Action, ChannelOccupation, Observation, StepInfo, StepResult};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simcore::{
    compute_gains, mw_to_dbm, place, sample_fading, step_mobility, EnvConfig, FadingState, GainSnapshot, MobilityState,
};

/// Complete simulator state between steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub mobility: MobilityState,
    pub fading: FadingState,
    pub gains: GainSnapshot,
    pub remaining_bits: Vec<f64>,
    pub remaining_ttis: usize,
    pub prev_actions: Vec<Action>,
    pub tti: u64,
    pub done: bool,
}

/// SplitMix64 mixing of a base seed and a salt into an independent seed.
pub fn derive_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_PLACEMENT: u64 = 0;
const STREAM_MOBILITY: u64 = 1;
const STREAM_FADING: u64 = 2;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Single-threaded environment instance.
pub struct Env {
    cfg: EnvConfig,
    eta: Vec<f64>,
    world: Option<WorldState>,
    fixed_gains: Option<GainSnapshot>,
    mob_rng: ChaCha8Rng,
    fade_rng: ChaCha8Rng,
}

impl Env {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        let eta = (0..cfg.n_subnetworks).map(|i| completion_reward(&cfg, i)).collect();
        Ok(Self {
            eta,
            world: None,
            fixed_gains: None,
            mob_rng: stream(cfg.seed, STREAM_MOBILITY),
            fade_rng: stream(cfg.seed, STREAM_FADING),
            cfg,
        })
    }

    /// Replaces the fading/pathloss computation by constant gains.
    pub fn with_fixed_gains(mut self, gains: GainSnapshot) -> Self {
        self.fixed_gains = Some(gains);
        self
    }

    pub fn cfg(&self) -> &EnvConfig {
        &self.cfg
    }

    /// Completion reward per agent.
    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn world(&self) -> Option<&WorldState> {
        self.world.as_ref()
    }

    pub fn n_agents(&self) -> usize {
        self.cfg.n_subnetworks
    }

    pub fn reset(&mut self, seed: u64) -> Result<Vec<Observation>> {
        let mobility = place(&self.cfg, &mut stream(seed, STREAM_PLACEMENT))?;
        self.reset_with_mobility(seed, mobility)
    }

    /// Starts an episode from explicit positions, headings and speeds.
    pub fn reset_with_mobility(&mut self, seed: u64, mobility: MobilityState) -> Result<Vec<Observation>> {
        if mobility.len() != self.cfg.n_subnetworks {
            return Err(Error::Config(format!(
                "mobility state has {} subnetworks, configuration has {}",
                mobility.len(),
                self.cfg.n_subnetworks
            )));
        }
        self.mob_rng = stream(seed, STREAM_MOBILITY);
        self.fade_rng = stream(seed, STREAM_FADING);
        let fading = sample_fading(None, &self.cfg, &mut self.fade_rng);
        let gains = match &self.fixed_gains {
            Some(g) => g.clone(),
            None => compute_gains(&mobility, &fading, &self.cfg, 0),
        };
        let n = self.cfg.n_subnetworks;
        let world = WorldState {
            mobility,
            fading,
            gains,
            remaining_bits: (0..n).map(|i| self.cfg.payload(i) as f64).collect(),
            remaining_ttis: self.cfg.episode_ttis,
            prev_actions: vec![Action::null(&self.cfg); n],
            tti: 0,
            done: false,
        };
        let noise = self.cfg.noise_dbm;
        let obs = (0..n)
            .map(|i| Observation {
                prev_action: world.prev_actions[i],
                remaining_payload_norm: 1.0,
                remaining_budget_norm: 1.0,
                rssi_dbm: vec![noise; self.cfg.n_channels],
            })
            .collect();
        self.world = Some(world);
        Ok(obs)
    }

    pub fn step(&mut self, actions: &[Action]) -> Result<StepResult> {
        let cfg = &self.cfg;
        let world = self.world.as_mut().ok_or(Error::EpisodeFinished)?;
        if world.done {
            return Err(Error::EpisodeFinished);
        }
        if actions.len() != cfg.n_subnetworks {
            return Err(Error::Config(format!("expected {} actions, got {}", cfg.n_subnetworks, actions.len())));
        }
        for (i, a) in actions.iter().enumerate() {
            a.validate(i, cfg)?;
        }
        world.tti += 1;
        if cfg.mobility_enabled {
            world.mobility = step_mobility(&world.mobility, cfg, &mut self.mob_rng);
        }
        world.fading = sample_fading(Some(&world.fading), cfg, &mut self.fade_rng);
        world.gains = match &self.fixed_gains {
            Some(g) => GainSnapshot { tti: world.tti, ..g.clone() },
            None => compute_gains(&world.mobility, &world.fading, cfg, world.tti),
        };
        let rssi = compute_rssi(&world.gains, actions, cfg);
        let m = cfg.n_channels;
        let n = cfg.n_subnetworks;
        let dt = cfg.tti_s();
        let mut sinr = Vec::with_capacity(n);
        let mut capacity = Vec::with_capacity(n);
        let mut delivered = Vec::with_capacity(n);
        let mut rewards = Vec::with_capacity(n);
        for i in 0..n {
            let s = own_signal(&world.gains, actions, cfg, i);
            let xi = sinr_from_rssi(rssi[i * m + actions[i].channel], s)?;
            let c = capacity_bps(xi, cfg);
            let before = world.remaining_bits[i];
            let bits = (c * dt).min(before.max(0.0));
            world.remaining_bits[i] = (before - c * dt).max(0.0);
            rewards.push(reward(c * dt / cfg.payload(i) as f64, before, self.eta[i]));
            sinr.push(xi);
            capacity.push(c);
            delivered.push(bits);
        }
        world.remaining_ttis -= 1;
        world.done = world.remaining_ttis == 0;
        world.prev_actions = actions.to_vec();
        let budget = world.remaining_ttis as f64 / cfg.episode_ttis as f64;
        let observations = (0..n)
            .map(|i| Observation {
                prev_action: actions[i],
                remaining_payload_norm: world.remaining_bits[i] / cfg.payload(i) as f64,
                remaining_budget_norm: budget,
                rssi_dbm: rssi[i * m..(i + 1) * m].iter().map(|r| mw_to_dbm(r.mw())).collect(),
            })
            .collect();
        Ok(StepResult {
            observations,
            rewards,
            per_channel_capacity: capacity,
            done: world.done,
            info: StepInfo {
                tti: world.tti,
                sinr,
                delivered_bits: delivered,
                remaining_bits: world.remaining_bits.clone(),
                all_delivered: world.remaining_bits.iter().all(|&b| b <= 0.0),
            },
        })
    }
}
