use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use subnet_core::simcore::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn pathloss_reference_values() {
    let cfg = EnvConfig::full_scale(1, 1);
    assert_eq!(pathloss_db(1.0, &cfg), 32.9);
    let ten = 32.9 + 10.0 * 3.19;
    assert!((pathloss_db(10.0, &cfg) - 64.8).abs() < 1e-12);
    assert!((pathloss_db(10.0, &cfg) - ten).abs() < 1e-12);
    // clamped below 0.1 m
    assert_eq!(pathloss_db(0.01, &cfg), pathloss_db(0.1, &cfg));
}

#[test]
fn pathloss_is_monotone() {
    let cfg = EnvConfig::full_scale(1, 1);
    let mut prev = f64::NEG_INFINITY;
    for k in 0..2000 {
        let pl = pathloss_db(0.05 + k as f64 * 0.17, &cfg);
        assert!(pl >= prev);
        prev = pl;
    }
}

#[test]
fn unit_fading_gain_at_one_metre() {
    let cfg = EnvConfig::full_scale(1, 1);
    let g = link_gain(1.0, 1.0, &cfg);
    let want = 10f64.powf((8.0 - 32.9) / 10.0);
    assert!((g - want).abs() / want < 1e-12);
    assert!((g - 3.24e-3).abs() < 0.01e-3);
}

#[test]
fn antenna_gain_scaling() {
    let cfg = EnvConfig::full_scale(1, 1);
    let mut hi = cfg.clone();
    hi.tx_gain_dbi += 3.0;
    hi.rx_gain_dbi += 3.0;
    let ratio = link_gain(7.0, 1.0, &hi) / link_gain(7.0, 1.0, &cfg);
    assert!((ratio - 10f64.powf(0.6)).abs() < 1e-9);
    assert!((ratio - 3.98).abs() < 0.01);
}

#[test]
fn degenerate_recursion_without_innovation() {
    let h = Complex64::new(0.3, -1.2);
    let out = ar1_update(h, 0.7, Complex64::new(0.0, 0.0));
    assert_eq!(out, h * 0.7);
}

fn fading_cfg(rho: f64) -> EnvConfig {
    let mut cfg = EnvConfig::full_scale(2, 1);
    cfg.fading_correlation = Some(rho);
    cfg
}

#[test]
fn iid_fading_power_has_unit_mean() {
    let cfg = fading_cfg(0.0);
    let mut r = rng(11);
    let mut sum = 0.0;
    let draws = 100_000;
    let mut state: Option<FadingState> = None;
    // Each state carries 2 intra and 2 cross coefficients.
    for _ in 0..draws / 4 {
        let s = sample_fading(state.as_ref(), &cfg, &mut r);
        sum += s.intra_power(0, 0) + s.intra_power(1, 0) + s.cross_power(0, 1) + s.cross_power(1, 0);
        state = Some(s);
    }
    let mean = sum / draws as f64;
    assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
}

#[test]
fn fading_stationary_mean_across_correlations() {
    for rho in [0.0, 0.5, 0.9, 0.99] {
        let mut cfg = fading_cfg(rho);
        cfg.n_subnetworks = 1;
        let mut r = rng(5 + (rho * 100.0) as u64);
        // Many independent chains so the long-run mean is estimated well even at rho = 0.99.
        let chains = 1000;
        let mut states: Vec<FadingState> = (0..chains).map(|_| sample_fading(None, &cfg, &mut r)).collect();
        let mut sum = 0.0;
        for _ in 0..100 {
            for s in states.iter_mut() {
                *s = sample_fading(Some(s), &cfg, &mut r);
                sum += s.intra_power(0, 0);
            }
        }
        let mean = sum / (chains * 100) as f64;
        assert!((0.98..=1.02).contains(&mean), "rho {rho}: mean {mean}");
    }
}

#[test]
fn lag_one_autocorrelation_matches_rho() {
    let rho = 0.8;
    let mut cfg = fading_cfg(rho);
    cfg.n_subnetworks = 1;
    let mut r = rng(3);
    let mut s = sample_fading(None, &cfg, &mut r);
    let mut xs = Vec::with_capacity(100_000);
    for _ in 0..100_000 {
        s = sample_fading(Some(&s), &cfg, &mut r);
        xs.push(s.intra[0].re);
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    let cov: f64 = xs.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    let ac = cov / var;
    assert!((ac - rho).abs() < 0.02, "autocorrelation {ac}");
}

#[test]
fn doppler_correlation_default() {
    let cfg = EnvConfig::full_scale(1, 1);
    let fd = cfg.mean_speed() * cfg.carrier_hz / 299_792_458.0;
    let want = bessel_j0(2.0 * std::f64::consts::PI * fd * cfg.tti_s());
    assert!((cfg.effective_fading_correlation() - want).abs() < 1e-12);
    assert!((0.9..1.0).contains(&want));
}

#[test]
fn turn_frequencies_match_configuration() {
    let cfg = EnvConfig::full_scale(1, 1);
    let mut r = rng(99);
    let mut counts = [0usize; 3];
    let n = 10_000;
    for _ in 0..n {
        match draw_turn(&cfg, &mut r) {
            Turn::Straight => counts[0] += 1,
            Turn::Left => counts[1] += 1,
            Turn::Right => counts[2] += 1,
        }
    }
    let f: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
    assert!((f[0] - 0.5).abs() < 0.02 && (f[1] - 0.25).abs() < 0.02 && (f[2] - 0.25).abs() < 0.02, "{f:?}");
}

#[test]
fn intersection_crossings_follow_turn_probabilities() {
    // One subnetwork on a large grid crossing many nodes; count heading changes at nodes.
    let mut cfg = EnvConfig::full_scale(1, 1);
    cfg.corridor_spacing_m = 1.0;
    cfg.area_m = [2000.0, 2000.0];
    let mut r = rng(7);
    let mut counts = [0usize; 3];
    let mut s = MobilityState { positions: vec![Point::new(1000.5, 1000.0)], headings: vec![Heading::East], speeds: vec![1000.0] };
    // speed·tti = 1 m = spacing: every step crosses exactly one node
    let mut crossings = 0;
    while crossings < 10_000 {
        let before = s.headings[0];
        let pos = s.positions[0];
        s = step_mobility(&s, &cfg, &mut r);
        let after = s.headings[0];
        let near_edge = pos.x < 5.0 || pos.y < 5.0 || pos.x > 1995.0 || pos.y > 1995.0;
        if near_edge {
            s.positions[0] = Point::new(1000.5, 1000.0);
            s.headings[0] = Heading::East;
            continue;
        }
        if after == before {
            counts[0] += 1;
        } else if after == before.left() {
            counts[1] += 1;
        } else if after == before.right() {
            counts[2] += 1;
        }
        crossings += 1;
    }
    let f: Vec<f64> = counts.iter().map(|&c| c as f64 / crossings as f64).collect();
    assert!((f[0] - 0.5).abs() < 0.02 && (f[1] - 0.25).abs() < 0.02 && (f[2] - 0.25).abs() < 0.02, "{f:?}");
}

#[test]
fn left_turn_rotates_heading_counter_clockwise() {
    for h in [Heading::East, Heading::North, Heading::West, Heading::South] {
        let (x, y) = h.unit();
        let (lx, ly) = apply_turn(h, Turn::Left).unit();
        assert!((lx + y).abs() < 1e-12 && (ly - x).abs() < 1e-12);
    }
}

#[test]
fn mid_corridor_step_moves_along_heading() {
    let cfg = EnvConfig::full_scale(1, 1);
    let s = MobilityState { positions: vec![Point::new(13.0, 20.0)], headings: vec![Heading::East], speeds: vec![2.5] };
    let next = step_mobility(&s, &cfg, &mut rng(0));
    assert!((next.positions[0].x - 13.0025).abs() < 1e-12);
}

#[test]
fn deterministic_trajectories_and_gains() {
    let cfg = EnvConfig::full_scale(8, 3);
    let run = || {
        let mut r = rng(2024);
        let mut mob = place(&cfg, &mut r).unwrap();
        let mut fad = sample_fading(None, &cfg, &mut r);
        let mut out = Vec::new();
        for t in 0..50 {
            mob = step_mobility(&mob, &cfg, &mut r);
            fad = sample_fading(Some(&fad), &cfg, &mut r);
            out.push((mob.clone(), compute_gains(&mob, &fad, &cfg, t)));
        }
        out
    };
    let (a, b) = (run(), run());
    for ((ma, ga), (mb, gb)) in a.iter().zip(&b) {
        assert_eq!(ma, mb);
        let bits = |g: &GainSnapshot| g.intra.iter().chain(&g.cross).map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(ga), bits(gb));
    }
}

#[test]
fn random_layout_gains_positive_and_finite() {
    let cfg = EnvConfig::full_scale(8, 3);
    let mut r = rng(8);
    let mob = place(&cfg, &mut r).unwrap();
    let fad = sample_fading(None, &cfg, &mut r);
    let g = compute_gains(&mob, &fad, &cfg, 0);
    for i in 0..8 {
        assert!(g.intra_gain(i, 0) > 0.0 && g.intra_gain(i, 0).is_finite());
        for j in 0..8 {
            if i != j {
                assert!(g.cross_gain(i, j) > 0.0 && g.cross_gain(i, j).is_finite());
            }
        }
    }
}

#[test]
fn overcrowded_area_fails_placement() {
    let mut cfg = EnvConfig::full_scale(50, 1);
    cfg.area_m = [2.0, 2.0];
    cfg.corridor_spacing_m = 1.0;
    cfg.placement_attempts = 200;
    assert!(matches!(place(&cfg, &mut rng(1)), Err(subnet_core::Error::PlacementFailed { .. })));
}

#[test]
fn config_rejects_every_violation_at_once() {
    let mut cfg = EnvConfig::full_scale(0, 0);
    cfg.turn_probs.straight = 0.9;
    let err = cfg.validate().unwrap_err().to_string();
    assert!(err.contains("n_subnetworks") && err.contains("n_channels") && err.contains("turn_probs"), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn separation_holds_after_every_step(seed in any::<u64>(), n in 2usize..10) {
        let cfg = EnvConfig::desk(n, 2);
        let mut r = rng(seed);
        let mut mob = place(&cfg, &mut r).unwrap();
        prop_assert!(mob.min_pairwise_distance() >= cfg.min_separation_m);
        let grid = CorridorGrid::new(&cfg);
        for _ in 0..300 {
            mob = step_mobility(&mob, &cfg, &mut r);
            prop_assert!(mob.min_pairwise_distance() >= cfg.min_separation_m - 1e-9);
            for p in &mob.positions {
                prop_assert!(grid.contains(*p));
            }
        }
    }

    #[test]
    fn pathloss_monotone_property(a in 0.0f64..500.0, b in 0.0f64..500.0) {
        let cfg = EnvConfig::full_scale(1, 1);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(pathloss_db(hi, &cfg) >= pathloss_db(lo, &cfg));
    }
}
