use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use subnet_core::baselines::PolicyVariant;
use subnet_core::env::write_trace;
use subnet_core::eval::{
    evaluate_checkpoint, init_learner, render_run_dir, run_sweep, write_record_tree, write_records, OutageRecord, RECORDS_FILE,
};
use subnet_core::masac::{train, ActorCheckpoint, ExecutionReport, RunWriter};

use crate::config::{load, ResolvedConfig};
use crate::error::{CliError, CliResult};
use crate::run::{prepare_run_dir, run_root, unix_ms, CodeVersion, RunManifest, RunSummary};

#[derive(Parser, Debug)]
#[command(name = "subnet", version, about = "Spectrum and power allocation for interfering subnetworks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Clone, Debug, Default)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base seed; overrides the configuration's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// `key=value` or `section.key=value`, applied after the file is read.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory (default: under $SUBNET_RUN_ROOT, or ./runs).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Require a fixed seed (0 when none is given) instead of drawing one.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a policy variant and write metrics and checkpoints.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate an actor checkpoint with greedy actions.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Actor checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Evaluation episodes (default: `[experiment].episodes`).
        #[arg(long)]
        episodes: Option<usize>,
        /// Also record the per-TTI trace of the first episode.
        #[arg(long)]
        trace: bool,
    },
    /// Run the `[experiment]` sweep and write outage records.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Render figures and their data files from a run directory.
    Plot {
        /// Directory holding training metrics, evaluation traces or sweep records.
        run_dir: PathBuf,
        /// Output directory; must lie outside the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn require_config(common: &Common) -> CliResult<ResolvedConfig> {
    let path = common.config.as_ref().ok_or_else(|| CliError::validation("--config is required"))?;
    load(path, &common.overrides)
}

fn resolve_seed(common: &Common, cfg: Option<&ResolvedConfig>) -> u64 {
    common.seed.or(cfg.and_then(|c| c.seed)).unwrap_or_else(|| if common.deterministic { 0 } else { rand::random() })
}

fn manifest(command: &str, common: &Common, cfg: &ResolvedConfig, seed: u64, checkpoint: Option<&Path>) -> RunManifest {
    RunManifest {
        command: command.into(),
        config_path: common.config.clone(),
        overrides: common.overrides.clone(),
        seed,
        deterministic: common.deterministic,
        config: cfg.clone(),
        checkpoint: checkpoint.map(Path::to_path_buf),
        code_version: CodeVersion::current(),
        started_unix_ms: unix_ms(),
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train { common } => cmd_train(&common),
        Command::Eval { common, checkpoint, episodes, trace } => cmd_eval(&common, &checkpoint, episodes, trace),
        Command::Sweep { common } => cmd_sweep(&common),
        Command::Plot { run_dir, out } => cmd_plot(&run_dir, out.as_deref()),
    }
}

pub fn cmd_train(common: &Common) -> CliResult<()> {
    let mut cfg = require_config(common)?;
    let tcfg = cfg.trainer.clone().ok_or_else(|| CliError::validation("train needs a [trainer] section"))?;
    let variant = *cfg.variant.get_or_insert(PolicyVariant::GanetFull);
    if !variant.is_trained() {
        return Err(CliError::validation(format!("variant {variant} has nothing to train")));
    }
    let seed = resolve_seed(common, Some(&cfg));
    cfg.seed = Some(seed);
    cfg.env.seed = seed;
    let dir = common.out.clone().unwrap_or_else(|| run_root().join(&cfg.name).join(variant.name()).join(seed.to_string()));
    prepare_run_dir(&dir)?;
    manifest("train", common, &cfg, seed, None).write(&dir)?;

    let env = cfg.env.clone();
    let mut learner = init_learner(variant, &env, &tcfg, seed)?;
    let mut writer = RunWriter::create(&dir, &env, tcfg.checkpoint_every)?;
    let metrics_path = dir.join("metrics.jsonl");
    match train(&env, &tcfg, learner.as_mut(), seed, &mut writer) {
        Ok(outcome) => {
            writer.finish(learner.as_ref())?;
            let last = outcome.metrics.last();
            let details = json!({
                "variant": variant.name(),
                "episodes": outcome.metrics.len(),
                "env_steps": outcome.env_steps,
                "updates": outcome.updates,
                "final_mean_reward": last.map(|m| m.mean_reward),
                "final_outage": last.map(|m| m.outage_rate()),
            });
            let summary = RunSummary::new("ok", &dir, &[metrics_path], details)?;
            summary.write(&dir)?;
            println!(
                "trained {} for {} episodes (seed {seed}); final mean reward {:.4}, outage {:.3}",
                variant,
                outcome.metrics.len(),
                last.map_or(0.0, |m| m.mean_reward),
                last.map_or(0.0, |m| m.outage_rate())
            );
            println!("metrics digest {}", summary.digests.get("metrics.jsonl").map_or("", String::as_str));
            println!("run directory {}", dir.display());
            Ok(())
        }
        Err(e) => {
            drop(writer);
            let summary = RunSummary::new("aborted", &dir, &[metrics_path], json!({ "error": e.to_string() }))?;
            summary.write(&dir)?;
            Err(e.into())
        }
    }
}

fn print_report(report: &ExecutionReport) {
    let s = &report.stats;
    println!(
        "{}: outage {:.4} [{:.4}, {:.4}] ({} of {} agent-episodes), mean reward {:.5}",
        report.policy, s.outage, s.ci_low, s.ci_high, s.failures, s.trials, report.mean_reward
    );
    for (i, a) in report.per_agent.iter().enumerate() {
        println!("  agent {i}: success {:.4}, outage {:.4}", 1.0 - a.outage, a.outage);
    }
}

pub fn cmd_eval(common: &Common, checkpoint: &Path, episodes: Option<usize>, trace: bool) -> CliResult<()> {
    let ckpt = ActorCheckpoint::load(checkpoint)
        .map_err(|e| CliError::validation(format!("cannot load checkpoint {}: {e}", checkpoint.display())))?;
    let mut cfg = match &common.config {
        Some(_) => require_config(common)?,
        None => ResolvedConfig {
            name: "eval".into(),
            variant: None,
            seed: None,
            env: ckpt.env.clone(),
            trainer: None,
            experiment: None,
        },
    };
    let episodes = episodes
        .or(cfg.experiment.as_ref().map(|x| x.episodes))
        .ok_or_else(|| CliError::validation("--episodes is required without an [experiment] section"))?;
    if episodes == 0 {
        return Err(CliError::validation("episodes must be >= 1"));
    }
    ckpt.check_compatible(&cfg.env)?;
    let seed = resolve_seed(common, Some(&cfg));
    cfg.seed = Some(seed);
    cfg.env.seed = seed;
    let dir = common.out.clone().unwrap_or_else(|| {
        run_root().join(&cfg.name).join("eval").join(&ckpt.variant).join(seed.to_string())
    });
    prepare_run_dir(&dir)?;
    manifest("eval", common, &cfg, seed, Some(checkpoint)).write(&dir)?;

    let report = evaluate_checkpoint(&ckpt, &cfg.env, episodes, seed, false)?;
    let report_path = dir.join("report.json");
    fs::write(&report_path, serde_json::to_string_pretty(&report)? + "\n")?;
    let mut record = OutageRecord::from_report(&cfg.name, "none", None, seed, episodes, &report);
    record.variant = ckpt.variant.clone();
    let records_path = dir.join(RECORDS_FILE);
    write_records(&[record], BufWriter::new(File::create(&records_path)?))?;
    let mut outputs = vec![report_path, records_path];
    if trace {
        let first = evaluate_checkpoint(&ckpt, &cfg.env, 1, seed, true)?;
        let trace_path = dir.join("trace.jsonl");
        write_trace(&first.trace, BufWriter::new(File::create(&trace_path)?))?;
        outputs.push(trace_path);
    }
    let summary = RunSummary::new("ok", &dir, &outputs, json!({ "episodes": episodes, "outage": report.stats.outage }))?;
    summary.write(&dir)?;
    print_report(&report);
    println!("run directory {}", dir.display());
    Ok(())
}

pub fn cmd_sweep(common: &Common) -> CliResult<()> {
    let mut cfg = require_config(common)?;
    let mut spec = cfg.experiment.clone().ok_or_else(|| CliError::validation("sweep needs an [experiment] section"))?;
    if let Some(s) = common.seed {
        spec.seeds = vec![s];
    }
    spec.validate()?;
    cfg.experiment = Some(spec.clone());
    let dir = common
        .out
        .clone()
        .or_else(|| spec.output_dir.clone())
        .unwrap_or_else(|| run_root().join(&spec.scenario));
    prepare_run_dir(&dir)?;
    manifest("sweep", common, &cfg, spec.seeds[0], None).write(&dir)?;

    let records = run_sweep(&cfg.env, &spec, cfg.trainer.as_ref(), Some(&dir))?;
    let files = write_record_tree(&dir, &records)?;
    let details = json!({ "records": records.len(), "skipped": records.iter().filter(|r| r.status != subnet_core::eval::RecordStatus::Ok).count() });
    RunSummary::new("ok", &dir, &files, details)?.write(&dir)?;
    for r in &records {
        let point = r.sweep_value.map_or(String::from("-"), |v| format!("{v}"));
        match r.status {
            subnet_core::eval::RecordStatus::Ok => println!(
                "{:<14} {:>8} seed {:<4} outage {:.4} [{:.4}, {:.4}] reward {:.5}",
                r.variant, point, r.seed, r.outage, r.ci_low, r.ci_high, r.mean_reward
            ),
            _ => println!("{:<14} {:>8} seed {:<4} skipped: {}", r.variant, point, r.seed, r.note.as_deref().unwrap_or("")),
        }
    }
    println!("run directory {}", dir.display());
    Ok(())
}

pub fn cmd_plot(run_dir: &Path, out: Option<&Path>) -> CliResult<()> {
    if !run_dir.is_dir() {
        return Err(CliError::validation(format!("{} is not a directory", run_dir.display())));
    }
    let out = match out {
        Some(o) => o.to_path_buf(),
        None => {
            let name = std::path::absolute(run_dir)?.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
            run_root().join("plots").join(name)
        }
    };
    if std::path::absolute(&out)?.starts_with(std::path::absolute(run_dir)?) {
        return Err(CliError::validation("plot output must lie outside the run directory"));
    }
    let written = render_run_dir(run_dir, &out)?;
    if written.is_empty() {
        println!("nothing to plot under {}", run_dir.display());
    }
    for p in &written {
        println!("{}", p.display());
    }
    Ok(())
}
