use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Branch probabilities at a corridor intersection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurnProbs {
    pub straight: f64,
    pub left: f64,
    pub right: f64,
}

impl Default for TurnProbs {
    fn default() -> Self {
        Self { straight: 0.5, left: 0.25, right: 0.25 }
    }
}

/// Every physical and scenario parameter of a run.
///
/// `n_subnetworks` and `n_channels` must always be given when deserialising;
/// all other fields fall back to the defaults below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub n_subnetworks: usize,
    pub n_channels: usize,
    /// Sensors per subnetwork (K).
    #[serde(default = "d::one")]
    pub n_subcarriers: usize,
    /// Deployment area `[width, height]` in metres.
    #[serde(default = "d::area")]
    pub area_m: [f64; 2],
    #[serde(default = "d::min_sep")]
    pub min_separation_m: f64,
    #[serde(default = "d::speed")]
    pub speed_range_mps: [f64; 2],
    #[serde(default)]
    pub turn_probs: TurnProbs,
    #[serde(default = "d::tti")]
    pub tti_ms: f64,
    #[serde(default = "d::ttis")]
    pub episode_ttis: usize,
    /// Aggregate bandwidth of one channel across the K subcarriers (K·W).
    #[serde(default = "d::bandwidth")]
    pub channel_bandwidth_hz: f64,
    #[serde(default = "d::noise")]
    pub noise_dbm: f64,
    /// Selectable transmit powers; exactly one entry equals `noise_dbm` and means "off".
    #[serde(default = "d::powers")]
    pub tx_power_levels_dbm: Vec<f64>,
    #[serde(default = "d::antenna")]
    pub tx_gain_dbi: f64,
    #[serde(default = "d::antenna")]
    pub rx_gain_dbi: f64,
    /// Recorded for completeness; the noise floor is `noise_dbm` as given.
    #[serde(default = "d::noise_figure")]
    pub rx_noise_figure_db: f64,
    /// Per-subnetwork payload in bits; a single entry applies to every subnetwork.
    #[serde(default = "d::payload")]
    pub payload_bits: Vec<u64>,
    #[serde(default = "d::carrier")]
    pub carrier_hz: f64,
    /// AR(1) coefficient of the fading process; `None` derives it from the
    /// Doppler spread at the mean speed.
    #[serde(default)]
    pub fading_correlation: Option<f64>,
    /// When false every fading power factor is exactly 1.
    #[serde(default = "d::yes")]
    pub fading_enabled: bool,
    #[serde(default = "d::yes")]
    pub mobility_enabled: bool,
    #[serde(default = "d::intra")]
    pub intra_link_distance_m: f64,
    #[serde(default = "d::spacing")]
    pub corridor_spacing_m: f64,
    #[serde(default = "d::intercept")]
    pub pathloss_intercept_db: f64,
    #[serde(default = "d::exponent")]
    pub pathloss_exponent: f64,
    #[serde(default = "d::attempts")]
    pub placement_attempts: usize,
    /// Observation RSSI feature is `(rssi_dbm + rssi_offset_db) / rssi_scale_db`.
    #[serde(default = "d::rssi_offset")]
    pub rssi_offset_db: f64,
    #[serde(default = "d::rssi_scale")]
    pub rssi_scale_db: f64,
    /// Completion reward as a multiple of the best normalised per-TTI rate.
    #[serde(default = "d::eta_margin")]
    pub eta_margin: f64,
    #[serde(default)]
    pub seed: u64,
}

mod d {
    pub fn one() -> usize {
        1
    }
    pub fn area() -> [f64; 2] {
        [259.8, 150.0]
    }
    pub fn min_sep() -> f64 {
        1.5
    }
    pub fn speed() -> [f64; 2] {
        [2.0, 3.0]
    }
    pub fn tti() -> f64 {
        1.0
    }
    pub fn ttis() -> usize {
        100
    }
    pub fn bandwidth() -> f64 {
        100e3
    }
    pub fn noise() -> f64 {
        -114.0
    }
    pub fn powers() -> Vec<f64> {
        vec![10.0, 0.0, -114.0]
    }
    pub fn antenna() -> f64 {
        4.0
    }
    pub fn noise_figure() -> f64 {
        5.0
    }
    pub fn payload() -> Vec<u64> {
        vec![34_000]
    }
    pub fn carrier() -> f64 {
        6e9
    }
    pub fn yes() -> bool {
        true
    }
    pub fn intra() -> f64 {
        1.0
    }
    pub fn spacing() -> f64 {
        10.0
    }
    pub fn intercept() -> f64 {
        32.9
    }
    pub fn exponent() -> f64 {
        3.19
    }
    pub fn attempts() -> usize {
        10_000
    }
    pub fn rssi_offset() -> f64 {
        114.0
    }
    pub fn rssi_scale() -> f64 {
        40.0
    }
    pub fn eta_margin() -> f64 {
        1.25
    }
}

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Side length of the square desk-scale deployment area.
pub const DESK_AREA_M: f64 = 6.0;
/// Corridor spacing of the desk-scale layout.
pub const DESK_CORRIDOR_SPACING_M: f64 = 2.0;

impl EnvConfig {
    /// Full-size deployment parameters.
    pub fn full_scale(n_subnetworks: usize, n_channels: usize) -> Self {
        Self {
            n_subnetworks,
            n_channels,
            n_subcarriers: d::one(),
            area_m: d::area(),
            min_separation_m: d::min_sep(),
            speed_range_mps: d::speed(),
            turn_probs: TurnProbs::default(),
            tti_ms: d::tti(),
            episode_ttis: d::ttis(),
            channel_bandwidth_hz: d::bandwidth(),
            noise_dbm: d::noise(),
            tx_power_levels_dbm: d::powers(),
            tx_gain_dbi: d::antenna(),
            rx_gain_dbi: d::antenna(),
            rx_noise_figure_db: d::noise_figure(),
            payload_bits: d::payload(),
            carrier_hz: d::carrier(),
            fading_correlation: None,
            fading_enabled: true,
            mobility_enabled: true,
            intra_link_distance_m: d::intra(),
            corridor_spacing_m: d::spacing(),
            pathloss_intercept_db: d::intercept(),
            pathloss_exponent: d::exponent(),
            placement_attempts: d::attempts(),
            rssi_offset_db: d::rssi_offset(),
            rssi_scale_db: d::rssi_scale(),
            eta_margin: d::eta_margin(),
            seed: 0,
        }
    }

    /// Compact layout in which subnetworks are close enough to interfere.
    pub fn desk(n_subnetworks: usize, n_channels: usize) -> Self {
        Self {
            area_m: [DESK_AREA_M, DESK_AREA_M],
            corridor_spacing_m: DESK_CORRIDOR_SPACING_M,
            ..Self::full_scale(n_subnetworks, n_channels)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs: Vec<String> = Vec::new();
        let mut check = |ok: bool, msg: &str| {
            if !ok {
                errs.push(msg.to_string());
            }
        };
        check(self.n_subnetworks >= 1, "n_subnetworks must be >= 1");
        check(self.n_channels >= 1, "n_channels must be >= 1");
        check(self.n_subcarriers >= 1, "n_subcarriers must be >= 1");
        check(self.episode_ttis >= 1, "episode_ttis must be >= 1");
        check(self.area_m.iter().all(|v| v.is_finite() && *v >= 0.0), "area_m must be finite and non-negative");
        check(
            self.corridor_spacing_m.is_finite()
                && self.corridor_spacing_m > 0.0
                && self.corridor_spacing_m <= self.area_m[0].min(self.area_m[1]).max(0.0),
            "corridor_spacing_m must be positive and fit inside area_m",
        );
        check(self.min_separation_m >= 0.0 && self.min_separation_m.is_finite(), "min_separation_m must be >= 0");
        check(
            self.speed_range_mps[0] >= 0.0 && self.speed_range_mps[0] <= self.speed_range_mps[1],
            "speed_range_mps must be ordered and non-negative",
        );
        let tp = self.turn_probs;
        check(
            [tp.straight, tp.left, tp.right].iter().all(|p| *p >= 0.0)
                && (tp.straight + tp.left + tp.right - 1.0).abs() < 1e-9,
            "turn_probs must be non-negative and sum to 1",
        );
        check(self.tti_ms > 0.0 && self.tti_ms.is_finite(), "tti_ms must be positive");
        check(self.channel_bandwidth_hz > 0.0 && self.channel_bandwidth_hz.is_finite(), "channel_bandwidth_hz must be positive");
        check(self.noise_dbm.is_finite(), "noise_dbm must be finite");
        let offs = self.tx_power_levels_dbm.iter().filter(|&&p| p == self.noise_dbm).count();
        check(offs == 1, "tx_power_levels_dbm must contain exactly one off level equal to noise_dbm");
        check(
            self.tx_power_levels_dbm.iter().any(|&p| p > self.noise_dbm),
            "tx_power_levels_dbm must contain a level above noise_dbm",
        );
        check(self.tx_power_levels_dbm.iter().all(|p| p.is_finite()), "tx_power_levels_dbm must be finite");
        check(
            self.payload_bits.len() == 1 || self.payload_bits.len() == self.n_subnetworks,
            "payload_bits must have one entry or one per subnetwork",
        );
        check(self.payload_bits.iter().all(|&b| b > 0), "payload_bits must be positive");
        check(self.carrier_hz > 0.0, "carrier_hz must be positive");
        if let Some(rho) = self.fading_correlation {
            check((0.0..1.0).contains(&rho), "fading_correlation must lie in [0, 1)");
        }
        check(self.intra_link_distance_m > 0.0, "intra_link_distance_m must be positive");
        check(self.pathloss_exponent >= 0.0, "pathloss_exponent must be >= 0");
        check(self.placement_attempts >= 1, "placement_attempts must be >= 1");
        check(self.rssi_scale_db > 0.0, "rssi_scale_db must be positive");
        check(self.eta_margin > 1.0, "eta_margin must exceed 1");
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.join("; ")))
        }
    }

    /// Actions per agent (M × β).
    pub fn n_actions(&self) -> usize {
        self.n_channels * self.tx_power_levels_dbm.len()
    }

    pub fn n_power_levels(&self) -> usize {
        self.tx_power_levels_dbm.len()
    }

    pub fn off_level(&self) -> usize {
        self.tx_power_levels_dbm.iter().position(|&p| p == self.noise_dbm).unwrap_or(0)
    }

    /// Index of the largest transmit power.
    pub fn max_level(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.tx_power_levels_dbm.iter().enumerate() {
            if p > self.tx_power_levels_dbm[best] {
                best = i;
            }
        }
        best
    }

    /// Linear transmit power in mW; the off level maps to 0.
    pub fn power_mw(&self, level: usize) -> f64 {
        if level == self.off_level() {
            0.0
        } else {
            dbm_to_mw(self.tx_power_levels_dbm[level])
        }
    }

    pub fn noise_mw(&self) -> f64 {
        dbm_to_mw(self.noise_dbm)
    }

    pub fn tti_s(&self) -> f64 {
        self.tti_ms * 1e-3
    }

    pub fn payload(&self, agent: usize) -> u64 {
        if self.payload_bits.len() == 1 {
            self.payload_bits[0]
        } else {
            self.payload_bits[agent]
        }
    }

    pub fn mean_speed(&self) -> f64 {
        0.5 * (self.speed_range_mps[0] + self.speed_range_mps[1])
    }

    /// AR(1) coefficient in use: explicit value, else `J0(2π f_d Δt)` at the mean speed.
    pub fn effective_fading_correlation(&self) -> f64 {
        self.fading_correlation.unwrap_or_else(|| {
            let doppler = self.mean_speed() * self.carrier_hz / SPEED_OF_LIGHT;
            bessel_j0(2.0 * std::f64::consts::PI * doppler * self.tti_s()).clamp(0.0, 0.999_999)
        })
    }

    /// Short stable hash of every physical parameter (the seed excluded).
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.seed = 0;
        let json = serde_json::to_string(&c).expect("config serialises");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(&digest[..8])
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Bessel function of the first kind, order zero, by its power series.
pub fn bessel_j0(x: f64) -> f64 {
    let q = -(x * x) / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / ((k * k) as f64);
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}
