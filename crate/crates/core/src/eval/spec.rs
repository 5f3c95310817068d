use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::baselines::PolicyVariant;
use crate::error::{Error, Result};
use crate::simcore::EnvConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    #[default]
    None,
    /// Number of subnetworks.
    Density,
    /// Channel bandwidth in Hz.
    Bandwidth,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Density => "density",
            Self::Bandwidth => "bandwidth",
        }
    }
}

/// One experiment: a sweep over a scenario parameter, the policies to compare,
/// and the evaluation budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scenario: String,
    #[serde(default)]
    pub sweep: SweepKind,
    /// Subnetwork counts or bandwidths in Hz, ascending.
    #[serde(default)]
    pub values: Vec<f64>,
    pub variants: Vec<PolicyVariant>,
    /// Evaluation episodes per (variant, value, seed).
    pub episodes: usize,
    pub seeds: Vec<u64>,
    /// When set, trained variants without a checkpoint are trained for this many episodes.
    #[serde(default)]
    pub train_episodes: Option<usize>,
    /// Root of `<variant>/<seed>/[<point>/]actor.ckpt` files.
    #[serde(default)]
    pub checkpoint_dir: Option<PathBuf>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(scenario: &str, sweep: SweepKind, values: Vec<f64>, variants: Vec<PolicyVariant>, episodes: usize, seeds: Vec<u64>) -> Self {
        Self {
            scenario: scenario.to_string(),
            sweep,
            values,
            variants,
            episodes,
            seeds,
            train_episodes: None,
            checkpoint_dir: None,
            output_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.scenario.is_empty() || self.scenario.contains(['/', '\\']) {
            errs.push("scenario must be a non-empty name without path separators".to_string());
        }
        if self.variants.is_empty() {
            errs.push("variants must not be empty".to_string());
        }
        if self.episodes == 0 {
            errs.push("episodes must be >= 1".to_string());
        }
        if self.seeds.is_empty() {
            errs.push("seeds must not be empty".to_string());
        }
        match self.sweep {
            SweepKind::None => {
                if !self.values.is_empty() {
                    errs.push("values must be empty when sweep = \"none\"".to_string());
                }
            }
            kind => {
                if self.values.is_empty() {
                    errs.push(format!("values must not be empty for a {} sweep", kind.name()));
                }
                if self.values.windows(2).any(|w| w[0] >= w[1]) {
                    errs.push("values must be strictly ascending".to_string());
                }
                if kind == SweepKind::Density && self.values.iter().any(|v| v.fract() != 0.0 || *v < 1.0) {
                    errs.push("density values must be positive integers".to_string());
                }
                if kind == SweepKind::Bandwidth && self.values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    errs.push("bandwidth values must be positive".to_string());
                }
            }
        }
        if self.train_episodes == Some(0) {
            errs.push("train_episodes must be >= 1 when given".to_string());
        }
        if errs.is_empty() {
            if self.seeds.len() < 2 && self.variants.iter().any(|v| v.is_trained()) {
                log::warn!("{}: a single seed supports no statistical claim about trained variants", self.scenario);
            }
            Ok(())
        } else {
            Err(Error::Config(errs.join("; ")))
        }
    }

    /// Sweep points; a single point for `SweepKind::None`.
    pub fn points(&self) -> Vec<Option<f64>> {
        match self.sweep {
            SweepKind::None => vec![None],
            _ => self.values.iter().map(|&v| Some(v)).collect(),
        }
    }

    /// Scenario configuration at one sweep point.
    pub fn apply(&self, base: &EnvConfig, value: Option<f64>) -> EnvConfig {
        let mut cfg = base.clone();
        match (self.sweep, value) {
            (SweepKind::Density, Some(v)) => cfg.n_subnetworks = v as usize,
            (SweepKind::Bandwidth, Some(v)) => cfg.channel_bandwidth_hz = v,
            _ => {}
        }
        cfg
    }

    /// Directory component naming a sweep point.
    pub fn point_label(&self, value: Option<f64>) -> Option<String> {
        match (self.sweep, value) {
            (SweepKind::Density, Some(v)) => Some(format!("n{}", v as usize)),
            (SweepKind::Bandwidth, Some(v)) => Some(format!("w{}", v as u64)),
            _ => None,
        }
    }
}
