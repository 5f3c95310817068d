use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subnet_core::baselines::*;
use subnet_core::env::{Action, Env, Observation};
use subnet_core::ganet::{one_hot, sample_gumbel, GaNetConfig, GaNetCritic, CriticVariant};
use subnet_core::masac::{train, Learner, NullObserver, Policy, ReplayBuffer, TrainerConfig, Transition};
use subnet_core::nn::{Graph, Matrix, ParamStore};
use subnet_core::simcore::EnvConfig;

#[test]
fn random_policy_is_uniform_over_actions() {
    let cfg = EnvConfig::desk(4, 3);
    let mut p = RandomPolicy::new(1);
    let draws = 100_000;
    let mut counts = vec![0usize; cfg.n_actions()];
    for _ in 0..draws {
        counts[p.draw(&cfg).index(&cfg)] += 1;
    }
    for c in counts {
        assert!((c as f64 / draws as f64 - 1.0 / 9.0).abs() < 0.01);
    }
}

#[test]
fn random_policy_reseeds_per_episode() {
    let cfg = EnvConfig::desk(2, 3);
    let obs = Env::new(cfg.clone()).unwrap().reset(0).unwrap();
    let mut p = RandomPolicy::new(0);
    let mut run = |seed| {
        p.reset(seed);
        (0..20).map(|i| p.select(i % 2, &obs[i % 2], &cfg)).collect::<Vec<_>>()
    };
    let a = run(5);
    let b = run(6);
    let c = run(5);
    assert_eq!(a, c);
    assert_ne!(a, b);
}

#[test]
fn dga_picks_quietest_channel_at_full_power() {
    let cfg = EnvConfig::desk(1, 3);
    let mut obs = Env::new(cfg.clone()).unwrap().reset(0).unwrap().remove(0);
    obs.rssi_dbm = vec![-80.0, -100.0, -90.0];
    assert_eq!(DgaPolicy::choose(&obs, &cfg), Action::new(1, cfg.max_level()));
    obs.rssi_dbm = vec![-95.0, -95.0, -90.0];
    assert_eq!(DgaPolicy::choose(&obs, &cfg), Action::new(0, cfg.max_level()));
}

#[test]
fn dga_agents_collide_after_a_shared_reset() {
    // identical noise-floor observations send everyone to the same channel
    let cfg = EnvConfig::desk(4, 3);
    let mut env = Env::new(cfg.clone()).unwrap();
    let obs = env.reset(2).unwrap();
    let mut dga = DgaPolicy;
    let acts: Vec<Action> = (0..4).map(|i| dga.select(i, &obs[i], &cfg)).collect();
    assert!(acts.iter().all(|a| *a == Action::new(0, cfg.max_level())));
    let step = env.step(&acts).unwrap();
    // channel 0 is now the loudest for everyone, so they all leave it together
    let next: Vec<Action> = (0..4).map(|i| dga.select(i, &step.observations[i], &cfg)).collect();
    assert!(next.iter().all(|a| a.channel != 0));
}

#[test]
fn fixed_policies() {
    let cfg = EnvConfig::desk(2, 3);
    let obs = Env::new(cfg.clone()).unwrap().reset(0).unwrap();
    let mut off = FixedPolicy::all_off(&cfg);
    assert_eq!(off.select(0, &obs[0], &cfg).power_level, cfg.off_level());
    let mut on = FixedPolicy::max_power(2, &cfg);
    assert_eq!(on.select(1, &obs[1], &cfg), Action::new(2, cfg.max_level()));
}

#[test]
fn maddpg_critic_sees_every_agent() {
    let cfg = EnvConfig::desk(4, 3);
    let t = TrainerConfig::new(1);
    let m = MaddpgLearner::new(&cfg, &t, &mut ChaCha8Rng::seed_from_u64(3));
    let d = Observation::feature_dim(&cfg);
    assert_eq!(m.critic_input_width(), 4 * (d + 9));
    assert_eq!(m.variant_name(), "maddpg");

    let mut store = ParamStore::new();
    let indep = GaNetCritic::new(GaNetConfig::for_env(&cfg, CriticVariant::Independent), &mut store, &mut ChaCha8Rng::seed_from_u64(4));
    assert_eq!(indep.input_width(), d + 9);
}

#[test]
fn maddpg_critic_input_layout() {
    let cfg = EnvConfig::desk(2, 1);
    let t = TrainerConfig::new(1);
    let m = MaddpgLearner::new(&cfg, &t, &mut ChaCha8Rng::seed_from_u64(5));
    let d = m.obs_dim;
    let a = m.n_actions;
    let mut g = Graph::new();
    let obs = Matrix::from_fn(2, d, |r, c| (r * 100 + c) as f64);
    let ov = g.constant(obs.clone());
    let acts = [g.constant(one_hot(&[1], a)), g.constant(one_hot(&[0], a))];
    let x = m.critic_input(&mut g, ov, &acts, 1);
    let row = g.value(x).row(0).to_vec();
    assert_eq!(row.len(), m.critic_input_width());
    assert_eq!(&row[..d], obs.row(0));
    assert_eq!(row[d + 1], 1.0);
    assert_eq!(&row[d + a..2 * d + a], obs.row(1));
    assert_eq!(row[2 * d + a], 1.0);
}

#[test]
fn maddpg_straight_through_gradient() {
    // dL/dlogits = -J_softmax(logits+g)ᵀ · ∂Q/∂a evaluated at the hard action
    let cfg = EnvConfig::desk(2, 1);
    let t = TrainerConfig::new(1);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let m = MaddpgLearner::new(&cfg, &t, &mut rng);
    let (d, a) = (m.obs_dim, m.n_actions);
    let obs = Matrix::from_fn(2, d, |_, _| rng.random_range(0.0..1.0));
    let others = [2usize, 1];
    let noise = sample_gumbel(2, a, &mut rng);

    let mut g = Graph::new();
    let pa = m.actor_params.bind(&mut g);
    let pc = m.critic_params.bind_const(&mut g);
    let obj = m.actor_objective(&mut g, &pa, &pc, &obs, &others, &noise, 1);
    g.backward(obj);
    let grads = pa.grads(&g);
    let bias = m.actor_params.names().iter().position(|n| n == "pi0.2.b").unwrap();
    let analytic = grads[bias].row(0).to_vec();

    let logits = m.actor.logits_plain(&m.actor_params, 0, &Matrix::from_vec(1, d, obs.row(0).to_vec()));
    let soft = |l: &[f64]| {
        let z: Vec<f64> = l.iter().zip(noise.row(0)).map(|(x, n)| x + n).collect();
        let mx = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - mx).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect::<Vec<_>>()
    };
    let s0 = soft(logits.row(0));
    let hard = s0.iter().enumerate().fold(0, |b, (k, v)| if *v > s0[b] { k } else { b });
    let q_at = |a0: &[f64]| {
        let mut x = obs.row(0).to_vec();
        x.extend_from_slice(a0);
        x.extend_from_slice(obs.row(1));
        x.extend(one_hot(&[others[1]], a).row(0));
        m.critics[0].eval(&m.critic_params, &Matrix::from_vec(1, x.len(), x)).get(0, 0)
    };
    let h = 1e-6;
    let base = one_hot(&[hard], a).row(0).to_vec();
    let dq: Vec<f64> = (0..a)
        .map(|k| {
            let mut p = base.clone();
            p[k] += h;
            let mut n = base.clone();
            n[k] -= h;
            (q_at(&p) - q_at(&n)) / (2.0 * h)
        })
        .collect();
    for j in 0..a {
        let mut lp = logits.row(0).to_vec();
        lp[j] += h;
        let mut ln = logits.row(0).to_vec();
        ln[j] -= h;
        let (sp, sn) = (soft(&lp), soft(&ln));
        let want: f64 = -(0..a).map(|k| (sp[k] - sn[k]) / (2.0 * h) * dq[k]).sum::<f64>();
        assert!((analytic[j] - want).abs() < 1e-7, "{j}: {} vs {want}", analytic[j]);
    }
}

#[test]
fn maddpg_trains_without_error() {
    let mut cfg = EnvConfig::desk(2, 2);
    cfg.episode_ttis = 6;
    let mut t = TrainerConfig::new(2);
    t.batch_size = 4;
    t.warmup = 4;
    let mut l = MaddpgLearner::new(&cfg, &t, &mut ChaCha8Rng::seed_from_u64(7));
    let out = train(&cfg, &t, &mut l, 8, &mut NullObserver).unwrap();
    assert_eq!(out.metrics.len(), 2);
    assert!(out.updates > 0);
    assert!(out.metrics.iter().all(|m| m.critic_loss.is_none_or(f64::is_finite)));
}

#[test]
fn every_trained_variant_updates() {
    let cfg = EnvConfig::desk(2, 2);
    let t = {
        let mut t = TrainerConfig::new(1);
        t.k_hist = 2;
        t
    };
    let d = Observation::feature_dim(&cfg);
    let mut r = ChaCha8Rng::seed_from_u64(9);
    let mut rb = ReplayBuffer::new(6);
    for _ in 0..6 {
        rb.push(Transition {
            frames: (0..3 * 2 * d).map(|_| r.random_range(0.0..1.0)).collect(),
            actions: vec![r.random_range(0..6), r.random_range(0..6)],
            rewards: vec![0.1, 0.05],
            done: false,
        });
    }
    let batch = rb.gather(&[0, 1, 2, 3, 4, 5], 2, d, 2);
    for v in PolicyVariant::ALL {
        let Some(mut l) = v.learner(&cfg, &t, &mut ChaCha8Rng::seed_from_u64(10)) else {
            assert!(!v.is_trained());
            continue;
        };
        assert_eq!(l.variant_name(), v.name());
        let stats = l.update(&batch, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert!(stats.critic_loss.is_finite() && stats.policy_loss.is_finite());
        assert!(stats.entropy > 0.0 && stats.entropy <= 6f64.ln() + 1e-12);
    }
}
