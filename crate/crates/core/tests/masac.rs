use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subnet_core::baselines::FixedPolicy;
use subnet_core::env::{Env, Observation};
use subnet_core::ganet::CriticVariant;
use subnet_core::masac::*;
use subnet_core::nn::{Adam, Graph, Matrix, ParamStore};
use subnet_core::simcore::EnvConfig;
use subnet_core::Error;

/// Two agents, one channel, power levels {on, off}: two actions each.
fn two_action_env() -> EnvConfig {
    let mut cfg = EnvConfig::desk(2, 1);
    cfg.tx_power_levels_dbm = vec![10.0, -114.0];
    cfg.episode_ttis = 5;
    cfg
}

fn small_trainer(k_hist: usize) -> TrainerConfig {
    let mut t = TrainerConfig::new(1);
    t.k_hist = k_hist;
    t.batch_size = 8;
    t.warmup = 8;
    t
}

fn learner(cfg: &EnvConfig, tcfg: &TrainerConfig, variant: CriticVariant, seed: u64) -> MasacLearner {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    MasacLearner::new(cfg, tcfg, variant, &mut rng)
}

/// Replay buffer of `len` random transitions for `cfg`.
fn random_buffer(cfg: &EnvConfig, k_hist: usize, len: usize, seed: u64) -> ReplayBuffer {
    let n = cfg.n_subnetworks;
    let d = Observation::feature_dim(cfg);
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut rb = ReplayBuffer::new(len);
    for _ in 0..len {
        rb.push(Transition {
            frames: (0..(k_hist + 1) * n * d).map(|_| r.random_range(0.0..1.0)).collect(),
            actions: (0..n).map(|_| r.random_range(0..cfg.n_actions())).collect(),
            rewards: (0..n).map(|_| r.random_range(0.0..0.2)).collect(),
            done: r.random_bool(0.2),
        });
    }
    rb
}

fn batch_of(cfg: &EnvConfig, rb: &ReplayBuffer, k_hist: usize) -> SampledBatch {
    let idx: Vec<usize> = (0..rb.len()).collect();
    rb.gather(&idx, cfg.n_subnetworks, Observation::feature_dim(cfg), k_hist)
}

#[test]
fn zero_discount_targets_equal_rewards() {
    let cfg = two_action_env();
    let mut t = small_trainer(2);
    t.gamma = 0.0;
    let l = learner(&cfg, &t, CriticVariant::NoHard, 1);
    let rb = random_buffer(&cfg, 2, 6, 2);
    let batch = batch_of(&cfg, &rb, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let y = l.critic_targets(&batch, &mut rng);
    assert_eq!(y, batch.rewards.data().to_vec());
}

#[test]
fn terminal_transitions_do_not_bootstrap() {
    let cfg = two_action_env();
    let mut t = small_trainer(2);
    t.terminal = TerminalMode::Terminal;
    let l = learner(&cfg, &t, CriticVariant::NoHard, 4);
    let mut rb = random_buffer(&cfg, 2, 4, 5);
    let mut all_done = ReplayBuffer::new(4);
    for i in 0..4 {
        let mut tr = rb.get(i).clone();
        tr.done = true;
        all_done.push(tr);
    }
    rb = all_done;
    let batch = batch_of(&cfg, &rb, 2);
    let y = l.critic_targets(&batch, &mut ChaCha8Rng::seed_from_u64(6));
    assert_eq!(y, batch.rewards.data().to_vec());
}

#[test]
fn exact_targets_match_tabular_enumeration() {
    let cfg = two_action_env();
    let mut t = small_trainer(2);
    t.alpha = 0.3;
    t.gamma = 0.8;
    let l = learner(&cfg, &t, CriticVariant::NoHard, 7);
    let rb = random_buffer(&cfg, 2, 5, 8);
    let batch = batch_of(&cfg, &rb, 2);
    let b = batch.batch();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let y = l.critic_targets(&batch, &mut rng);

    // oracle: Q_i for all four joint actions, then the soft expectation by hand
    let mut q = vec![vec![vec![0.0; b]; 4]; 2];
    for a0 in 0..2 {
        for a1 in 0..2 {
            let acts: Vec<usize> = (0..2 * b).map(|r| if r < b { a0 } else { a1 }).collect();
            let table = l.q_tables(&l.critic_target, &batch.next_frames, &acts, b, &mut rng);
            for col in 0..b {
                q[0][a0 * 2 + a1][col] = table.get(col, a0);
                q[1][a0 * 2 + a1][col] = table.get(b + col, a1);
            }
        }
    }
    let d = Observation::feature_dim(&cfg);
    for i in 0..2 {
        for col in 0..b {
            let pi: Vec<Vec<f64>> = (0..2)
                .map(|j| l.actor.distribution(&l.actor_target, j, batch.next_obs().row(j * b + col)).probs)
                .collect();
            assert_eq!(batch.next_obs().cols(), d);
            let mut v = 0.0;
            for a0 in 0..2 {
                for a1 in 0..2 {
                    let own = if i == 0 { a0 } else { a1 };
                    v += pi[0][a0] * pi[1][a1] * (q[i][a0 * 2 + a1][col] - 0.3 * pi[i][own].ln());
                }
            }
            let want = batch.rewards.get(i * b + col, 0) + 0.8 * v;
            let got = y[i * b + col];
            assert!((got - want).abs() < 1e-6, "agent {i} col {col}: {got} vs {want}");
        }
    }
}

#[test]
fn critic_loss_sums_agent_means() {
    let cfg = EnvConfig::desk(3, 2);
    let t = small_trainer(2);
    let mut l = learner(&cfg, &t, CriticVariant::NoHard, 10);
    let rb = random_buffer(&cfg, 2, 8, 11);
    let batch = batch_of(&cfg, &rb, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let q = l.q_tables(&l.critic_params, &batch.current.frames, &batch.current.actions, 8, &mut rng);
    let y: Vec<f64> = (0..24).map(|r| q.get(r, batch.current.actions[r]) + 1.0).collect();
    let loss = l.critic_step(&batch, &y, &mut rng).unwrap();
    assert!((loss - 3.0).abs() < 1e-9, "{loss}");
}

#[test]
fn critic_overfits_a_small_buffer() {
    let cfg = two_action_env();
    let t = small_trainer(2);
    let mut l = learner(&cfg, &t, CriticVariant::Full, 13);
    let rb = random_buffer(&cfg, 2, 32, 14);
    let batch = batch_of(&cfg, &rb, 2);
    let y: Vec<f64> = batch.rewards.data().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let first = l.critic_step(&batch, &y, &mut rng).unwrap();
    let mut last = first;
    for _ in 0..200 {
        last = l.critic_step(&batch, &y, &mut rng).unwrap();
    }
    assert!(last <= 0.1 * first, "loss {first} -> {last}");
}

#[test]
fn baseline_examples() {
    assert_eq!(counterfactual_baseline(&[2.0, 4.0], &[0.5, 0.5]), 3.0);
    assert_eq!(counterfactual_baseline(&[2.0, 4.0, 9.0], &[0.0, 1.0, 0.0]), 4.0);
    let mut r = ChaCha8Rng::seed_from_u64(16);
    let q: Vec<f64> = (0..9).map(|_| r.random_range(-1.0..1.0)).collect();
    let mut p: Vec<f64> = (0..9).map(|_| r.random_range(0.0..1.0)).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= s);
    let mut brute = 0.0;
    for k in 0..9 {
        brute += q[k] * p[k];
    }
    assert!((counterfactual_baseline(&q, &p) - brute).abs() < 1e-15);
}

#[test]
fn advantages_have_zero_mean_under_the_policy() {
    let mut r = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..100 {
        let logits: Vec<f64> = (0..9).map(|_| r.random_range(-3.0..3.0)).collect();
        let p = subnet_core::ganet::Categorical::from_logits(&logits).probs;
        let q: Vec<f64> = (0..9).map(|_| r.random_range(-1.0..1.0)).collect();
        let adv = advantages(&q, &p);
        let mean: f64 = adv.iter().zip(&p).map(|(a, p)| a * p).sum();
        assert!(mean.abs() < 1e-12);
    }
}

/// Loss and gradient of `exact_objective` with respect to raw logits.
fn exact_loss(logits: &Matrix, adv: &Matrix, alpha: f64) -> (f64, Matrix) {
    let mut g = Graph::new();
    let x = g.leaf(logits.clone());
    let lp = g.log_softmax_rows(x);
    let loss = exact_objective(&mut g, lp, adv, alpha, logits.rows());
    let v = g.value(loss).get(0, 0);
    g.backward(loss);
    (v, g.grad(x).unwrap().clone())
}

#[test]
fn exact_policy_gradient_matches_finite_differences() {
    let mut r = ChaCha8Rng::seed_from_u64(18);
    let logits = Matrix::from_fn(3, 4, |_, _| r.random_range(-1.0..1.0));
    let adv = Matrix::from_fn(3, 4, |_, _| r.random_range(-1.0..1.0));
    let (_, grad) = exact_loss(&logits, &adv, 0.2);
    let h = 1e-6;
    for idx in 0..logits.len() {
        let mut p = logits.clone();
        p.data_mut()[idx] += h;
        let mut m = logits.clone();
        m.data_mut()[idx] -= h;
        let fd = (exact_loss(&p, &adv, 0.2).0 - exact_loss(&m, &adv, 0.2).0) / (2.0 * h);
        assert!((grad.data()[idx] - fd).abs() < 1e-8);
    }
}

#[test]
fn sampled_gradient_is_unbiased_for_the_exact_one() {
    let mut r = ChaCha8Rng::seed_from_u64(19);
    let logits = Matrix::from_rows(&[vec![0.2, -0.5, 0.9]]);
    let q = [0.3, 1.0, -0.4];
    let alpha = 0.4;
    let pi = subnet_core::ganet::Categorical::from_logits(logits.row(0)).probs;
    let adv = Matrix::from_rows(&[advantages(&q, &pi)]);
    let (_, exact) = exact_loss(&logits, &adv, alpha);
    let draws = 200_000;
    let mut mean = vec![0.0; 3];
    let b = counterfactual_baseline(&q, &pi);
    for _ in 0..draws {
        let a = subnet_core::ganet::Categorical { probs: pi.clone() }.sample(&mut r);
        let w = q[a] - b - alpha * pi[a].ln();
        let mut g = Graph::new();
        let x = g.leaf(logits.clone());
        let lp = g.log_softmax_rows(x);
        let loss = sampled_surrogate(&mut g, lp, &[a], &[w], 1);
        g.backward(loss);
        for (m, v) in mean.iter_mut().zip(g.grad(x).unwrap().data()) {
            *m += v / draws as f64;
        }
    }
    for k in 0..3 {
        assert!((mean[k] - exact.data()[k]).abs() < 0.01, "{k}: {} vs {}", mean[k], exact.data()[k]);
    }
}

#[test]
fn flat_critic_without_entropy_gives_no_gradient() {
    let logits = Matrix::from_rows(&[vec![0.3, -0.1, 0.7], vec![1.0, 0.0, -1.0]]);
    let pi0 = subnet_core::ganet::Categorical::from_logits(logits.row(0)).probs;
    let pi1 = subnet_core::ganet::Categorical::from_logits(logits.row(1)).probs;
    let adv = Matrix::from_rows(&[advantages(&[0.5; 3], &pi0), advantages(&[0.5; 3], &pi1)]);
    let (_, grad) = exact_loss(&logits, &adv, 0.0);
    assert!(grad.max_abs() < 1e-15);
}

/// Trains a single categorical policy against a fixed critic and returns its final probabilities.
fn bandit(q: &[f64], alpha: f64, steps: usize) -> Vec<f64> {
    let mut store = ParamStore::new();
    let id = store.add("logits", Matrix::zeros(1, q.len()));
    let mut opt = Adam::new(&store, 0.05);
    for _ in 0..steps {
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let lp = g.log_softmax_rows(p.var(id));
        let pi: Vec<f64> = g.value(lp).row(0).iter().map(|l| l.exp()).collect();
        let adv = Matrix::from_rows(&[advantages(q, &pi)]);
        let loss = exact_objective(&mut g, lp, &adv, alpha, 1);
        g.backward(loss);
        let grads = p.grads(&g);
        opt.step(&mut store, &grads);
    }
    subnet_core::ganet::Categorical::from_logits(store.values()[0].row(0)).probs
}

#[test]
fn bandit_policy_finds_the_best_arm() {
    let p = bandit(&[0.0, 1.0, 0.2], 0.01, 500);
    assert!(p[1] >= 0.9, "{p:?}");
}

#[test]
fn higher_temperature_keeps_more_entropy() {
    let q = [0.0, 1.0, 0.2];
    let ent = |p: Vec<f64>| -p.iter().map(|x| x * x.ln()).sum::<f64>();
    let h: Vec<f64> = [0.0, 0.1, 0.5, 2.0].iter().map(|&a| ent(bandit(&q, a, 500))).collect();
    for w in h.windows(2) {
        assert!(w[0] < w[1], "{h:?}");
    }
}

#[test]
fn soft_update_moves_targets_slowly() {
    let cfg = two_action_env();
    let mut t = small_trainer(2);
    t.lr_critic = 1e-2;
    t.lr_actor = 1e-2;
    let mut l = learner(&cfg, &t, CriticVariant::Full, 20);
    let rb = random_buffer(&cfg, 2, 8, 21);
    let batch = batch_of(&cfg, &rb, 2);
    let before_target = l.critic_target.flatten();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    l.update(&batch, &mut rng).unwrap();
    let online = l.critic_params.flatten();
    let after = l.critic_target.flatten();
    for k in 0..online.len() {
        let want = 0.995 * before_target[k] + 0.005 * online[k];
        assert!((after[k] - want).abs() < 1e-15);
    }
    // the online network moved; the target trails it
    let moved: f64 = online.iter().zip(&before_target).map(|(a, b)| (a - b).abs()).sum();
    let lag: f64 = after.iter().zip(&before_target).map(|(a, b)| (a - b).abs()).sum();
    assert!(moved > 0.0 && lag > 0.0 && lag < 0.01 * moved + 1e-12);
    let ab = l.actor_params.flatten();
    let at = l.actor_target.flatten();
    assert!(ab.iter().zip(&at).any(|(a, b)| a != b));
}

#[test]
fn replay_sampling_is_uniform() {
    let cfg = two_action_env();
    let rb = random_buffer(&cfg, 1, 10, 23);
    let mut counts = [0u64; 10];
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let draws = 100_000;
    for _ in 0..draws {
        counts[rb.sample_indices(1, &mut rng)[0]] += 1;
    }
    let expected = draws as f64 / 10.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99.9th percentile of chi-square with 9 degrees of freedom
    assert!(chi2 < 27.877, "chi2 = {chi2}");
}

#[test]
fn smoke_training_run() {
    let cfg = two_action_env();
    let mut t = TrainerConfig::new(1);
    t.batch_size = 4;
    t.warmup = 4;
    let mut l = learner(&cfg, &t, CriticVariant::Full, 25);
    let out = train(&cfg, &t, &mut l, 26, &mut NullObserver).unwrap();
    assert_eq!(out.buffer_len, 5);
    assert_eq!(out.env_steps, 5);
    assert_eq!(out.metrics.len(), 1);
    assert_eq!(out.updates, 2);
    let m = &out.metrics[0];
    assert_eq!(m.outage.len(), 2);
    assert!(m.critic_loss.is_some_and(f64::is_finite));
}

#[test]
fn training_is_deterministic() {
    let cfg = two_action_env();
    let mut t = TrainerConfig::new(3);
    t.batch_size = 4;
    t.warmup = 4;
    let run = || {
        let mut l = learner(&cfg, &t, CriticVariant::Full, 27);
        let out = train(&cfg, &t, &mut l, 28, &mut NullObserver).unwrap();
        (out.metrics, l.actor_target.flatten())
    };
    let (m1, p1) = run();
    let (m2, p2) = run();
    assert_eq!(m1, m2);
    assert_eq!(p1, p2);
}

#[test]
fn invalid_trainer_config_is_rejected() {
    let mut t = TrainerConfig::new(1);
    t.gamma = 1.0;
    t.batch_size = 0;
    let err = t.validate().unwrap_err().to_string();
    assert!(err.contains("gamma") && err.contains("batch_size"));
}

#[test]
fn execution_uses_actor_checkpoint_only() {
    let cfg = two_action_env();
    let t = small_trainer(2);
    let l = learner(&cfg, &t, CriticVariant::Full, 29);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("actor.ckpt");
    l.actor_checkpoint(&cfg).save(&path).unwrap();
    let file = CheckpointFile::read(&path).unwrap();
    assert!(file.section("critic").is_none());
    assert!(file.section("actor").is_some());
    let ckpt = ActorCheckpoint::load(&path).unwrap();
    let report = execute(&ckpt, &cfg, 3, 30, false).unwrap();
    assert_eq!(report.failed.len(), 3);
    assert_eq!(report.stats.trials, 6);
    let failures = report.failed.iter().flatten().filter(|&&f| f).count() as u64;
    assert_eq!(report.stats.failures, failures);
    assert_eq!(report.stats.outage, failures as f64 / 6.0);
    let again = execute(&ckpt, &cfg, 3, 30, false).unwrap();
    assert_eq!(report, again);
}

#[test]
fn outage_counts_unfinished_payloads() {
    let mut cfg = EnvConfig::desk(1, 1);
    cfg.fading_enabled = false;
    let mut env = Env::new(cfg.clone()).unwrap();
    let mut on = FixedPolicy::max_power(0, &cfg);
    let report = rollout(&mut env, &mut on, 5, 31, false).unwrap();
    assert_eq!(report.stats.outage, 0.0);
    let mut off = FixedPolicy::all_off(&cfg);
    let report = rollout(&mut env, &mut off, 5, 31, false).unwrap();
    assert_eq!(report.stats.outage, 1.0);
    assert_eq!(report.stats.failures, 5);
}

#[test]
fn mismatched_environment_is_refused() {
    let cfg = two_action_env();
    let t = small_trainer(2);
    let l = learner(&cfg, &t, CriticVariant::NoAttn, 32);
    let ckpt = l.actor_checkpoint(&cfg);
    let mut other = cfg.clone();
    other.episode_ttis = 6;
    assert!(matches!(execute(&ckpt, &other, 1, 0, false), Err(Error::FingerprintMismatch { .. })));
    // the seed is not part of the fingerprint
    assert!(execute(&ckpt, &cfg.clone().with_seed(99), 1, 0, false).is_ok());
}

#[test]
fn full_checkpoint_round_trips() {
    let cfg = two_action_env();
    let t = small_trainer(2);
    let l = learner(&cfg, &t, CriticVariant::Full, 33);
    let file = l.full_checkpoint(&cfg).unwrap();
    let back = CheckpointFile::from_bytes(&file.to_bytes().unwrap()).unwrap();
    assert_eq!(back.header, file.header);
    assert_eq!(back.section("critic").unwrap(), l.critic_params.flatten().as_slice());
    let mut bytes = file.to_bytes().unwrap();
    bytes.push(0);
    assert!(CheckpointFile::from_bytes(&bytes).is_err());
}

#[test]
fn wilson_interval_examples() {
    let (lo, hi) = wilson_interval(0, 100, Z95);
    assert!(lo.abs() < 1e-15);
    assert!((hi - 0.036_995).abs() < 1e-5);
    let (lo, hi) = wilson_interval(50, 100, Z95);
    assert!((lo - 0.403_831).abs() < 1e-5 && (hi - 0.596_169).abs() < 1e-5);
}
