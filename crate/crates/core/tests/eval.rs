use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use subnet_core::baselines::{FixedPolicy, PolicyVariant};
use subnet_core::env::{write_trace, Env, TraceRecord};
use subnet_core::eval::*;
use subnet_core::masac::{rollout, write_metrics, EpisodeMetrics, MasacLearner, TrainerConfig, METRICS_SCHEMA};
use subnet_core::ganet::CriticVariant;
use subnet_core::simcore::EnvConfig;

fn spec(sweep: SweepKind, values: Vec<f64>) -> ExperimentSpec {
    ExperimentSpec::new("t", sweep, values, vec![PolicyVariant::Random, PolicyVariant::Dga], 2, vec![1, 2])
}

fn short(cfg: EnvConfig) -> EnvConfig {
    let mut c = cfg;
    c.episode_ttis = 6;
    c
}

#[test]
fn records_round_trip() {
    let cfg = short(EnvConfig::desk(3, 2));
    let records = run_sweep(&cfg, &spec(SweepKind::None, vec![]), None, None).unwrap();
    let mut buf = Vec::new();
    write_records(&records, &mut buf).unwrap();
    assert_eq!(read_records(buf.as_slice()).unwrap(), records);
    let dir = tempfile::tempdir().unwrap();
    let files = write_record_tree(dir.path(), &records).unwrap();
    assert_eq!(files.len(), 4);
    let mut back = collect_records(dir.path()).unwrap();
    let key = |r: &OutageRecord| (r.variant.clone(), r.seed);
    back.sort_by_key(key);
    let mut want = records.clone();
    want.sort_by_key(key);
    assert_eq!(back, want);
}

#[test]
fn record_fields_are_consistent() {
    let cfg = short(EnvConfig::desk(3, 2));
    for r in run_sweep(&cfg, &spec(SweepKind::None, vec![]), None, None).unwrap() {
        assert_eq!(r.schema, RECORD_SCHEMA);
        assert_eq!(r.status, RecordStatus::Ok);
        assert_eq!(r.trials, 6);
        assert_eq!(r.outage, r.failures as f64 / r.trials as f64);
        assert!(r.ci_low <= r.outage && r.outage <= r.ci_high);
        assert_eq!(r.per_agent_success.len(), 3);
    }
}

#[test]
fn spec_validation_reports_every_problem() {
    let mut s = spec(SweepKind::Density, vec![4.0, 2.0, 2.5]);
    s.episodes = 0;
    s.seeds.clear();
    let err = s.validate().unwrap_err().to_string();
    for needle in ["episodes", "seeds", "ascending", "integers"] {
        assert!(err.contains(needle), "{err}");
    }
    assert!(spec(SweepKind::None, vec![1.0]).validate().is_err());
    assert!(spec(SweepKind::Bandwidth, vec![]).validate().is_err());
    assert!(spec(SweepKind::Bandwidth, vec![5e4, 1e5]).validate().is_ok());
    let bad: Result<ExperimentSpec, _> =
        parse_spec_json(r#"{"scenario":"x","variants":["random"],"episodes":1,"seeds":[0],"colour":"red"}"#);
    assert!(bad.is_err());
}

fn parse_spec_json(json: &str) -> Result<ExperimentSpec, serde_json::Error> {
    serde_json::from_str(json)
}

#[test]
fn sweep_cardinality() {
    let cfg = short(EnvConfig::desk(2, 2));
    let s = spec(SweepKind::Density, vec![2.0, 3.0, 4.0]);
    let records = run_sweep(&cfg, &s, None, None).unwrap();
    assert_eq!(records.len(), 3 * 2 * 2);
    for r in &records {
        let n = r.sweep_value.unwrap() as usize;
        assert_eq!(r.per_agent_success.len(), n);
        assert_eq!(r.trials, (2 * n) as u64);
    }
    let s = spec(SweepKind::Bandwidth, vec![5e4, 1e5]);
    assert_eq!(run_sweep(&cfg, &s, None, None).unwrap().len(), 2 * 2 * 2);
}

#[test]
fn sweeps_are_reproducible() {
    let cfg = short(EnvConfig::desk(3, 2));
    let s = spec(SweepKind::None, vec![]);
    assert_eq!(run_sweep(&cfg, &s, None, None).unwrap(), run_sweep(&cfg, &s, None, None).unwrap());
}

#[test]
fn missing_checkpoints_are_skipped_not_fatal() {
    let cfg = short(EnvConfig::desk(2, 2));
    let mut s = spec(SweepKind::None, vec![]);
    s.variants = vec![PolicyVariant::GanetFull, PolicyVariant::Random];
    let dir = tempfile::tempdir().unwrap();
    s.checkpoint_dir = Some(dir.path().to_path_buf());
    let records = run_sweep(&cfg, &s, None, None).unwrap();
    assert_eq!(records.len(), 4);
    let skipped: Vec<_> = records.iter().filter(|r| r.status == RecordStatus::Skipped).collect();
    assert_eq!(skipped.len(), 2);
    assert!(skipped.iter().all(|r| r.variant == "ganet_full"));
}

#[test]
fn stored_checkpoints_are_used() {
    let cfg = short(EnvConfig::desk(2, 2));
    let mut s = spec(SweepKind::None, vec![]);
    s.variants = vec![PolicyVariant::GanetNoAttn];
    s.seeds = vec![4];
    let dir = tempfile::tempdir().unwrap();
    s.checkpoint_dir = Some(dir.path().to_path_buf());
    let l = MasacLearner::new(&cfg, &TrainerConfig::new(1), CriticVariant::NoAttn, &mut ChaCha8Rng::seed_from_u64(0));
    let path = checkpoint_path(dir.path(), &s, PolicyVariant::GanetNoAttn, 4, None);
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    subnet_core::masac::Learner::actor_checkpoint(&l, &cfg).save(&path).unwrap();
    let records = run_sweep(&cfg, &s, None, None).unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].status, RecordStatus::Ok);
    assert_eq!(records[0].variant, "ganet_no_attn");
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = walk(dir).into_iter().map(|p| (p.display().to_string(), fs::read(&p).unwrap())).collect();
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

fn populate_run(dir: &Path) -> EnvConfig {
    let cfg = short(EnvConfig::desk(3, 2));
    let rows: Vec<EpisodeMetrics> = (0..4)
        .map(|e| EpisodeMetrics {
            schema: METRICS_SCHEMA,
            episode: e,
            seed: 9,
            mean_reward: 0.01 * e as f64,
            episode_reward: 0.1 * e as f64,
            outage: vec![false, e % 2 == 0, false],
            updates: e as u64,
            critic_loss: None,
            policy_loss: None,
            entropy: None,
        })
        .collect();
    write_metrics(&rows, fs::File::create(dir.join("metrics.jsonl")).unwrap()).unwrap();
    let records = run_sweep(&cfg, &spec(SweepKind::None, vec![]), None, None).unwrap();
    write_record_tree(&dir.join("records"), &records).unwrap();
    let mut env = Env::new(cfg.clone()).unwrap();
    let mut p = FixedPolicy::max_power(1, &cfg);
    let report = rollout(&mut env, &mut p, 1, 3, true).unwrap();
    write_trace(&report.trace, fs::File::create(dir.join("trace.jsonl")).unwrap()).unwrap();
    cfg
}

#[test]
fn plotting_is_read_only_and_idempotent() {
    let run = tempfile::tempdir().unwrap();
    populate_run(run.path());
    let before = snapshot(run.path());
    let out1 = tempfile::tempdir().unwrap();
    let out2 = tempfile::tempdir().unwrap();
    let w1 = render_run_dir(run.path(), out1.path()).unwrap();
    let w2 = render_run_dir(run.path(), out2.path()).unwrap();
    assert_eq!(snapshot(run.path()), before);
    assert_eq!(w1.len(), w2.len());
    assert_eq!(w1.len(), 8);
    for (a, b) in w1.iter().zip(&w2) {
        assert_eq!(a.file_name(), b.file_name());
        assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
    }
    assert!(w1.iter().any(|p| p.extension().is_some_and(|e| e == "png")));
}

#[test]
fn figure_regenerates_from_its_csv() {
    let run = tempfile::tempdir().unwrap();
    populate_run(run.path());
    let out = tempfile::tempdir().unwrap();
    render_run_dir(run.path(), out.path()).unwrap();
    let csv = out.path().join("outage_sweep.csv");
    let png = out.path().join("again.png");
    plot_from_csv(PlotKind::OutageSweep, &csv, &png).unwrap();
    assert_eq!(fs::read(&png).unwrap(), fs::read(out.path().join("outage_sweep.png")).unwrap());
}

#[test]
fn timeline_grid_is_agents_by_ttis() {
    let cfg = short(EnvConfig::desk(3, 2));
    let mut env = Env::new(cfg.clone()).unwrap();
    let mut p = FixedPolicy::max_power(1, &cfg);
    let trace: Vec<TraceRecord> = rollout(&mut env, &mut p, 1, 0, true).unwrap().trace;
    let t = TimelineData::from_trace(&trace);
    assert_eq!(t.dims(), (3, 6));
    let grid = t.grid();
    assert_eq!(grid.len(), 3);
    assert!(grid.iter().all(|row| row.len() == 6 && row.iter().all(|c| *c == Some((1, 10.0)))));
    let back = TimelineData::from_csv(&t.to_csv().unwrap()).unwrap();
    assert_eq!(back.dims(), (3, 6));
}

#[test]
fn empty_run_directory_plots_nothing() {
    let run = tempfile::tempdir().unwrap();
    let out = run.path().join("never");
    assert!(render_run_dir(run.path(), &out).unwrap().is_empty());
    assert!(!out.exists());
}

#[test]
fn line_csv_round_trip() {
    let mut d = LineData::default();
    d.push("a", 0.0, 1.5);
    d.push("b,c", 1.0, -2.25);
    let back = LineData::from_csv(&d.to_csv().unwrap()).unwrap();
    assert_eq!(back.to_csv().unwrap(), d.to_csv().unwrap());
}

#[test]
fn silent_policy_fails_every_qos_agent() {
    let cfg = qos_config();
    assert_eq!(cfg.payload_bits, QOS_PAYLOADS_BITS.to_vec());
    let mut env = Env::new(cfg.clone()).unwrap();
    let mut off = FixedPolicy::all_off(&cfg);
    let report = rollout(&mut env, &mut off, 3, 0, false).unwrap();
    assert!((0..4).all(|i| report.success_rate(i) == 0.0));
}

#[test]
fn qos_report_shapes() {
    let mut cfg = qos_config();
    cfg.episode_ttis = 8;
    let l = MasacLearner::new(&cfg, &TrainerConfig::new(1), CriticVariant::Full, &mut ChaCha8Rng::seed_from_u64(1));
    let ckpt = subnet_core::masac::Learner::actor_checkpoint(&l, &cfg);
    let r = run_qos_scenario(&cfg, &ckpt, 4, 2).unwrap();
    assert_eq!(r.trained_success.len(), 4);
    assert_eq!(r.random_success.len(), 4);
    assert_eq!(r.timeline.len(), 4 * 8);
    assert_eq!(r.success, r.trained_success.iter().zip(&r.random_success).all(|(t, x)| t >= x));
}

#[test]
fn checkpoint_paths_encode_the_point() {
    let s = spec(SweepKind::Density, vec![4.0]);
    let p = checkpoint_path(Path::new("/c"), &s, PolicyVariant::Maddpg, 3, Some(4.0));
    assert_eq!(p, Path::new("/c/maddpg/3/n4/actor.ckpt"));
    let s = spec(SweepKind::None, vec![]);
    assert_eq!(checkpoint_path(Path::new("/c"), &s, PolicyVariant::GanetFull, 0, None), Path::new("/c/ganet_full/0/actor.ckpt"));
}
