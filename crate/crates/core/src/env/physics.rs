use super::types::Action;
use crate::error::{Error, Result};
use crate::simcore::{EnvConfig, GainSnapshot};

/// Intra-subnetwork received power of agent `i` on its selected channel (mW).
pub fn own_signal(gains: &GainSnapshot, actions: &[Action], cfg: &EnvConfig, i: usize) -> f64 {
    let p = cfg.power_mw(actions[i].power_level);
    (0..gains.k).map(|k| p * gains.intra_gain(i, k)).sum()
}

/// Total received power on one channel (mW), carried as an unevaluated sum
/// `hi + lo` so that a dominant own signal can be subtracted without losing
/// the interference-plus-noise part to rounding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rssi {
    hi: f64,
    lo: f64,
}

impl Rssi {
    /// Received power rounded to the nearest f64.
    pub fn mw(self) -> f64 {
        self.hi
    }

    /// Rounding residual: the exact sum is `mw() + residual()`.
    pub fn residual(self) -> f64 {
        self.lo
    }

    pub fn add(self, x: f64) -> Self {
        let s = self.hi + x;
        let bp = s - self.hi;
        let err = (self.hi - (s - bp)) + (x - bp);
        let lo = self.lo + err;
        let hi = s + lo;
        Self { hi, lo: lo - (hi - s) }
    }

    /// Exact `self - x` for `x <= self`, rounded once.
    fn minus(self, x: f64) -> f64 {
        (self.hi - x) + self.lo
    }
}

impl From<f64> for Rssi {
    fn from(mw: f64) -> Self {
        Self { hi: mw, lo: 0.0 }
    }
}

/// Received power per subnetwork and channel, row-major N × M.
///
/// Every channel is sensed: entry `(i, m)` holds the own signal when `i`
/// transmits on `m`, the interference of every other subnetwork on `m`, and noise.
pub fn compute_rssi(gains: &GainSnapshot, actions: &[Action], cfg: &EnvConfig) -> Vec<Rssi> {
    let n = actions.len();
    let m = cfg.n_channels;
    let mut rssi = vec![Rssi::from(cfg.noise_mw()); n * m];
    for i in 0..n {
        let row = &mut rssi[i * m..(i + 1) * m];
        for (j, a) in actions.iter().enumerate() {
            if j != i {
                row[a.channel] = row[a.channel].add(cfg.power_mw(a.power_level) * gains.cross_gain(i, j));
            }
        }
        let c = actions[i].channel;
        row[c] = row[c].add(own_signal(gains, actions, cfg, i));
    }
    rssi
}

/// SINR recovered from total received power and the known own signal.
pub fn sinr_from_rssi(rssi: impl Into<Rssi>, own_signal: f64) -> Result<f64> {
    let rssi = rssi.into();
    let total = rssi.mw();
    if own_signal == 0.0 && total > 0.0 {
        return Ok(0.0);
    }
    let rest = rssi.minus(own_signal);
    if !(rest > 0.0) || own_signal < 0.0 {
        return Err(Error::SinrDomain { signal: own_signal, rssi: total });
    }
    Ok(own_signal / rest)
}

/// Shannon capacity over the aggregate channel bandwidth, in bit/s.
pub fn capacity_bps(sinr: f64, cfg: &EnvConfig) -> f64 {
    cfg.channel_bandwidth_hz * (1.0 + sinr).log2()
}

/// Per-TTI reward: normalised delivery while payload remains, `eta` afterwards.
pub fn reward(delivered_normalized: f64, remaining_before_bits: f64, eta: f64) -> f64 {
    if remaining_before_bits > 0.0 {
        delivered_normalized
    } else {
        eta
    }
}

/// Completion reward of agent `i`: `eta_margin` times the best normalised
/// per-TTI rate at maximum power over the intra link without fading.
pub fn completion_reward(cfg: &EnvConfig, i: usize) -> f64 {
    cfg.eta_margin * max_normalized_rate(cfg, i)
}

pub fn max_normalized_rate(cfg: &EnvConfig, i: usize) -> f64 {
    let g = crate::simcore::link_gain(cfg.intra_link_distance_m, 1.0, cfg);
    let snr = cfg.n_subcarriers as f64 * cfg.power_mw(cfg.max_level()) * g / cfg.noise_mw();
    capacity_bps(snr, cfg) * cfg.tti_s() / cfg.payload(i) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinr_examples() {
        assert_eq!(sinr_from_rssi(2.0, 1.0).unwrap(), 1.0);
        assert_eq!(sinr_from_rssi(1e-11, 0.0).unwrap(), 0.0);
        assert!(sinr_from_rssi(1.0, 1.0).is_err());
        assert!(sinr_from_rssi(1.0, 2.0).is_err());
    }

    #[test]
    fn residual_keeps_small_terms() {
        let r = Rssi::from(1.0).add(1e-20).add(3e-21);
        assert_eq!(r.mw(), 1.0);
        assert!((r.residual() - 1.3e-20).abs() < 1e-35);
        assert!((sinr_from_rssi(r, 1.0).unwrap() - 1.0 / 1.3e-20).abs() * 1.3e-20 < 1e-15);
    }

    #[test]
    fn capacity_examples() {
        let cfg = EnvConfig::full_scale(1, 1);
        assert_eq!(capacity_bps(1.0, &cfg), 100_000.0);
        assert_eq!(capacity_bps(0.0, &cfg), 0.0);
        assert_eq!(capacity_bps(3.0, &cfg), 200_000.0);
    }

    #[test]
    fn reward_branches() {
        let r = reward(3_400.0 / 34_000.0, 34_000.0, 0.5);
        assert!((r - 0.1).abs() < 1e-15);
        assert_eq!(reward(0.0, 0.0, 0.5), 0.5);
        assert_eq!(reward(0.0, 100.0, 0.5), 0.0);
    }

    #[test]
    fn noise_floor_when_everyone_is_off() {
        let cfg = EnvConfig::full_scale(1, 3);
        let g = GainSnapshot::constant(1, 1, 1e-3, 0.0);
        let rssi = compute_rssi(&g, &[Action::null(&cfg)], &cfg);
        for r in rssi {
            assert_eq!(r.mw(), 10f64.powf(-11.4));
        }
    }
}
