use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simcore::EnvConfig;

/// Channel and transmit-power choice of one subnetwork.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub channel: usize,
    pub power_level: usize,
}

impl Action {
    pub fn new(channel: usize, power_level: usize) -> Self {
        Self { channel, power_level }
    }

    /// Convention used before the first step: channel 0, transmitter off.
    pub fn null(cfg: &EnvConfig) -> Self {
        Self { channel: 0, power_level: cfg.off_level() }
    }

    /// Flat index `channel·β + power_level`.
    pub fn index(&self, cfg: &EnvConfig) -> usize {
        self.channel * cfg.n_power_levels() + self.power_level
    }

    pub fn from_index(idx: usize, cfg: &EnvConfig) -> Self {
        let b = cfg.n_power_levels();
        Self { channel: idx / b, power_level: idx % b }
    }

    pub fn is_off(&self, cfg: &EnvConfig) -> bool {
        self.power_level == cfg.off_level()
    }

    pub fn validate(&self, agent: usize, cfg: &EnvConfig) -> Result<()> {
        if self.channel >= cfg.n_channels {
            return Err(Error::InvalidAction { agent, reason: format!("channel {} >= {}", self.channel, cfg.n_channels) });
        }
        if self.power_level >= cfg.n_power_levels() {
            return Err(Error::InvalidAction {
                agent,
                reason: format!("power level {} >= {}", self.power_level, cfg.n_power_levels()),
            });
        }
        Ok(())
    }
}

/// Binary N × M indicator of the selected channel per subnetwork.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelOccupation {
    pub n: usize,
    pub m: usize,
    pub theta: Vec<u8>,
}

impl ChannelOccupation {
    pub fn from_actions(actions: &[Action], n_channels: usize) -> Self {
        let mut theta = vec![0u8; actions.len() * n_channels];
        for (i, a) in actions.iter().enumerate() {
            theta[i * n_channels + a.channel] = 1;
        }
        Self { n: actions.len(), m: n_channels, theta }
    }

    pub fn get(&self, i: usize, m: usize) -> u8 {
        self.theta[i * self.m + m]
    }

    pub fn row_sum(&self, i: usize) -> u32 {
        self.theta[i * self.m..(i + 1) * self.m].iter().map(|&x| u32::from(x)).sum()
    }
}

/// Local view of one subnetwork.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub prev_action: Action,
    pub remaining_payload_norm: f64,
    pub remaining_budget_norm: f64,
    pub rssi_dbm: Vec<f64>,
}

impl Observation {
    /// Width of [`Observation::features`].
    pub fn feature_dim(cfg: &EnvConfig) -> usize {
        2 * cfg.n_channels + cfg.n_power_levels() + 2
    }

    /// Network input: one-hot previous channel, one-hot previous power level,
    /// remaining payload, remaining budget, scaled RSSI per channel.
    pub fn features(&self, cfg: &EnvConfig) -> Vec<f64> {
        let mut f = Vec::with_capacity(Self::feature_dim(cfg));
        self.write_features(cfg, &mut f);
        f
    }

    pub fn write_features(&self, cfg: &EnvConfig, out: &mut Vec<f64>) {
        let m = cfg.n_channels;
        let b = cfg.n_power_levels();
        let start = out.len();
        out.resize(start + m + b, 0.0);
        out[start + self.prev_action.channel] = 1.0;
        out[start + m + self.prev_action.power_level] = 1.0;
        out.push(self.remaining_payload_norm);
        out.push(self.remaining_budget_norm);
        out.extend(self.rssi_dbm.iter().map(|r| (r + cfg.rssi_offset_db) / cfg.rssi_scale_db));
    }
}

/// Per-step diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub tti: u64,
    /// Linear SINR on the selected channel.
    pub sinr: Vec<f64>,
    pub delivered_bits: Vec<f64>,
    pub remaining_bits: Vec<f64>,
    pub all_delivered: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observations: Vec<Observation>,
    pub rewards: Vec<f64>,
    /// Capacity in bit/s on each subnetwork's selected channel.
    pub per_channel_capacity: Vec<f64>,
    /// The time budget is exhausted.
    pub done: bool,
    pub info: StepInfo,
}
