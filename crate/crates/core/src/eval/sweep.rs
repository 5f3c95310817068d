use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::records::OutageRecord;
use super::spec::ExperimentSpec;
use crate::baselines::{DgaPolicy, PolicyVariant, RandomPolicy};
use crate::env::{derive_seed, Env};
use crate::error::{Error, Result};
use crate::masac::{rollout, train, ActorCheckpoint, ActorPolicy, ExecutionReport, Learner, NullObserver, Policy, TrainerConfig};
use crate::nn::ParamStore;
use crate::simcore::EnvConfig;

/// Hex SHA-256 over the little-endian parameter values.
pub fn param_hash(store: &ParamStore) -> String {
    let mut h = Sha256::new();
    for v in store.flatten() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Greedy evaluation of trained actors; fails if evaluation changed any parameter.
pub fn evaluate_checkpoint(ckpt: &ActorCheckpoint, cfg: &EnvConfig, episodes: usize, seed: u64, trace: bool) -> Result<ExecutionReport> {
    ckpt.check_compatible(cfg)?;
    let before = param_hash(&ckpt.params);
    let mut policy = ActorPolicy::new(ckpt.clone());
    let mut env = Env::new(cfg.clone())?;
    let report = rollout(&mut env, &mut policy, episodes, seed, trace)?;
    if param_hash(&policy.checkpoint.params) != before {
        return Err(Error::Checkpoint("parameters changed during evaluation".into()));
    }
    Ok(report)
}

/// Evaluates a training-free variant.
pub fn evaluate_heuristic(variant: PolicyVariant, cfg: &EnvConfig, episodes: usize, seed: u64, trace: bool) -> Result<ExecutionReport> {
    let mut policy: Box<dyn Policy> = match variant {
        PolicyVariant::Random => Box::new(RandomPolicy::new(seed)),
        PolicyVariant::Dga => Box::new(DgaPolicy),
        v => return Err(Error::Config(format!("{v} needs a trained checkpoint"))),
    };
    let mut env = Env::new(cfg.clone())?;
    rollout(&mut env, policy.as_mut(), episodes, seed, trace)
}

/// Freshly initialised learner of a trainable variant; weights depend on `seed` only.
pub fn init_learner(variant: PolicyVariant, cfg: &EnvConfig, tcfg: &TrainerConfig, seed: u64) -> Result<Box<dyn Learner>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x1417));
    variant
        .learner(cfg, tcfg, &mut rng)
        .ok_or_else(|| Error::Config(format!("{variant} is not trainable")))
}

/// Trains one variant and returns its actors.
pub fn train_variant(variant: PolicyVariant, cfg: &EnvConfig, tcfg: &TrainerConfig, seed: u64) -> Result<ActorCheckpoint> {
    let mut learner = init_learner(variant, cfg, tcfg, seed)?;
    train(cfg, tcfg, learner.as_mut(), seed, &mut NullObserver)?;
    Ok(learner.actor_checkpoint(cfg))
}

/// Where a sweep looks for, and stores, trained actors.
pub fn checkpoint_path(root: &Path, spec: &ExperimentSpec, variant: PolicyVariant, seed: u64, value: Option<f64>) -> PathBuf {
    let mut p = root.join(variant.name()).join(seed.to_string());
    if let Some(label) = spec.point_label(value) {
        p = p.join(label);
    }
    p.join("actor.ckpt")
}

/// Evaluates every (point, variant, seed) of a spec.
///
/// Trained variants load `checkpoint_dir/<variant>/<seed>/[<point>/]actor.ckpt`;
/// when that file is absent and `train_episodes` and `tcfg` are given they are
/// trained (and saved under `save_dir` if provided), otherwise a skipped record is emitted.
pub fn run_sweep(base: &EnvConfig, spec: &ExperimentSpec, tcfg: Option<&TrainerConfig>, save_dir: Option<&Path>) -> Result<Vec<OutageRecord>> {
    spec.validate()?;
    let sweep = spec.sweep.name();
    let mut out = Vec::new();
    for value in spec.points() {
        let cfg = spec.apply(base, value);
        cfg.validate()?;
        for &variant in &spec.variants {
            for &seed in &spec.seeds {
                let report = if variant.is_trained() {
                    match load_or_train(&cfg, spec, variant, seed, value, tcfg, save_dir)? {
                        Some(ckpt) => evaluate_checkpoint(&ckpt, &cfg, spec.episodes, seed, false)?,
                        None => {
                            log::warn!("no checkpoint for {variant} seed {seed} at {value:?}; skipping");
                            out.push(OutageRecord::skipped(&spec.scenario, variant.name(), sweep, value, seed, "missing checkpoint".into()));
                            continue;
                        }
                    }
                } else {
                    evaluate_heuristic(variant, &cfg, spec.episodes, seed, false)?
                };
                let mut rec = OutageRecord::from_report(&spec.scenario, sweep, value, seed, spec.episodes, &report);
                rec.variant = variant.name().to_string();
                out.push(rec);
            }
        }
    }
    Ok(out)
}

fn load_or_train(
    cfg: &EnvConfig,
    spec: &ExperimentSpec,
    variant: PolicyVariant,
    seed: u64,
    value: Option<f64>,
    tcfg: Option<&TrainerConfig>,
    save_dir: Option<&Path>,
) -> Result<Option<ActorCheckpoint>> {
    if let Some(root) = &spec.checkpoint_dir {
        let path = checkpoint_path(root, spec, variant, seed, value);
        if path.is_file() {
            return ActorCheckpoint::load(&path).map(Some);
        }
    }
    let (Some(episodes), Some(tcfg)) = (spec.train_episodes, tcfg) else {
        return Ok(None);
    };
    let mut t = tcfg.clone();
    t.episodes = episodes;
    let ckpt = train_variant(variant, cfg, &t, seed)?;
    if let Some(root) = save_dir {
        let path = checkpoint_path(root, spec, variant, seed, value);
        std::fs::create_dir_all(path.parent().expect("has parent"))?;
        ckpt.save(&path)?;
    }
    Ok(Some(ckpt))
}
