use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::EnvConfig;
use super::mobility::MobilityState;

/// Log-distance pathloss in dB, with distances clamped below at 0.1 m.
pub fn pathloss_db(distance_m: f64, cfg: &EnvConfig) -> f64 {
    cfg.pathloss_intercept_db + 10.0 * cfg.pathloss_exponent * distance_m.max(0.1).log10()
}

/// Linear link gain for a distance and fading power factor.
pub fn link_gain(distance_m: f64, fading_power: f64, cfg: &EnvConfig) -> f64 {
    10f64.powf((cfg.tx_gain_dbi + cfg.rx_gain_dbi - pathloss_db(distance_m, cfg)) / 10.0) * fading_power
}

/// Circularly-symmetric complex Gaussian with unit variance.
pub fn complex_gaussian(rng: &mut impl Rng) -> Complex64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// One AR(1) step `ρ·prev + √(1−ρ²)·w`.
pub fn ar1_update(prev: Complex64, rho: f64, w: Complex64) -> Complex64 {
    prev * rho + w * (1.0 - rho * rho).sqrt()
}

/// Small-scale coefficients of every link.
///
/// `intra` is indexed `i·K + k`; `cross` is indexed `i·N + j` and holds the
/// link from transmitter `j` to receiver `i` (diagonal unused).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FadingState {
    pub n: usize,
    pub k: usize,
    pub intra: Vec<Complex64>,
    pub cross: Vec<Complex64>,
}

impl FadingState {
    /// Every coefficient equal to 1 (no fading).
    pub fn unit(n: usize, k: usize) -> Self {
        Self { n, k, intra: vec![Complex64::new(1.0, 0.0); n * k], cross: vec![Complex64::new(1.0, 0.0); n * n] }
    }

    pub fn intra_power(&self, i: usize, k: usize) -> f64 {
        self.intra[i * self.k + k].norm_sqr()
    }

    pub fn cross_power(&self, i: usize, j: usize) -> f64 {
        self.cross[i * self.n + j].norm_sqr()
    }
}

/// Evolves (or freshly draws, when `prev` is `None`) the fading of all links.
pub fn sample_fading(prev: Option<&FadingState>, cfg: &EnvConfig, rng: &mut impl Rng) -> FadingState {
    let (n, k) = (cfg.n_subnetworks, cfg.n_subcarriers);
    if !cfg.fading_enabled {
        return FadingState::unit(n, k);
    }
    let rho = cfg.effective_fading_correlation();
    let mut draw = |old: Option<Complex64>| {
        let w = complex_gaussian(rng);
        match old {
            Some(h) => ar1_update(h, rho, w),
            None => w,
        }
    };
    let prev = prev.filter(|p| p.n == n && p.k == k);
    let intra = (0..n * k).map(|x| draw(prev.map(|p| p.intra[x]))).collect();
    let cross = (0..n * n)
        .map(|x| if x / n == x % n { Complex64::new(0.0, 0.0) } else { draw(prev.map(|p| p.cross[x])) })
        .collect();
    FadingState { n, k, intra, cross }
}

/// Linear link gains for one TTI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainSnapshot {
    pub n: usize,
    pub k: usize,
    /// `g_ik` indexed `i·K + k`.
    pub intra: Vec<f64>,
    /// `g_ij` (transmitter `j` into receiver `i`) indexed `i·N + j`; diagonal is 0.
    pub cross: Vec<f64>,
    pub tti: u64,
}

impl GainSnapshot {
    pub fn intra_gain(&self, i: usize, k: usize) -> f64 {
        self.intra[i * self.k + k]
    }

    pub fn cross_gain(&self, i: usize, j: usize) -> f64 {
        self.cross[i * self.n + j]
    }

    /// Snapshot with every intra gain equal to `intra` and every cross gain equal to `cross`.
    pub fn constant(n: usize, k: usize, intra: f64, cross: f64) -> Self {
        let cross = (0..n * n).map(|x| if x / n == x % n { 0.0 } else { cross }).collect();
        Self { n, k, intra: vec![intra; n * k], cross, tti: 0 }
    }
}

pub fn compute_gains(mob: &MobilityState, fading: &FadingState, cfg: &EnvConfig, tti: u64) -> GainSnapshot {
    let (n, k) = (fading.n, fading.k);
    let mut intra = Vec::with_capacity(n * k);
    for i in 0..n {
        for s in 0..k {
            intra.push(link_gain(cfg.intra_link_distance_m, fading.intra_power(i, s), cfg));
        }
    }
    let mut cross = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d = mob.positions[i].distance(mob.positions[j]);
                cross[i * n + j] = link_gain(d, fading.cross_power(i, j), cfg);
            }
        }
    }
    GainSnapshot { n, k, intra, cross, tti }
}
