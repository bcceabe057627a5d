//! Multi-seed runs, the cross-seed summary and the default experiment suite.
//!
//! A run directory holds:
//!
//! - `config.txt`: the canonical configuration the run used;
//! - `seed_<s>.csv`: per-update metrics of seed `s`;
//! - `seed_<s>.timing.csv`: wall-clock per update;
//! - `seed_<s>.ckpt`: final parameters;
//! - `summary.csv`: cross-seed mean and standard deviation of the evaluation
//!   return at every update where any seed evaluated.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::agent::{Agent, AgentConfig, RandomRejection, TrainSchedule, Variant};
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::metrics::{fmt_f64, mean_std, MetricsTable, MetricsWriter};

pub const CONFIG_FILE: &str = "config.txt";
pub const SUMMARY_FILE: &str = "summary.csv";

pub const SUMMARY_COLUMNS: [&str; 8] = [
    "update",
    "env_steps_mean",
    "seeds",
    "eval_return_mean",
    "eval_return_std",
    "return_mean_mean",
    "return_mean_std",
    "failed_seeds",
];

/// Variants of the default suite, in run order: the sauna run has to finish
/// before the random filter can replay its rejection schedule.
pub const SUITE_VARIANTS: [Variant; 4] = [
    Variant::PpoBaseline,
    Variant::Sauna,
    Variant::NoFilterAux,
    Variant::RandomFilter,
];

pub fn seed_metrics_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.csv"))
}

pub fn seed_timing_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.timing.csv"))
}

pub fn seed_checkpoint_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.ckpt"))
}

/// Desk-scale settings for a built-in environment. The remaining values keep
/// the library defaults.
pub fn preset(env: &str) -> Result<ExperimentConfig> {
    let mut c = ExperimentConfig {
        env: env.to_string(),
        ..Default::default()
    };
    match env {
        "pendulum" | "pointmass" => {
            c.hyper.gamma = 0.95;
            c.hyper.learning_rate = 1e-3;
            c.hyper.horizon = 1024;
            c.reward_scale = 0.1;
        }
        other => {
            return Err(Error::Config(format!("no preset for environment {other:?}")));
        }
    }
    Ok(c)
}

/// Per-update rejection fractions of a finished metrics file.
pub fn rejection_schedule(metrics_csv: &Path) -> Result<Vec<f64>> {
    let table = MetricsTable::read(metrics_csv)?;
    table
        .column("rejection_fraction")?
        .into_iter()
        .map(|x| x.ok_or_else(|| Error::Usage(format!("{}: empty rejection_fraction", metrics_csv.display()))))
        .collect()
}

/// Agent settings for one seed, resolving the random filter's rate.
pub fn agent_config(cfg: &ExperimentConfig, seed: u64) -> Result<AgentConfig> {
    let random_rejection = if cfg.variant != Variant::RandomFilter {
        None
    } else if let Some(src) = &cfg.random_filter_source {
        let file = if src.is_dir() {
            seed_metrics_path(src, seed)
        } else {
            src.clone()
        };
        Some(RandomRejection::Schedule(rejection_schedule(&file)?))
    } else if let Some(rate) = cfg.random_filter_rate {
        Some(RandomRejection::Rate(rate))
    } else {
        return Err(Error::Config(
            "random_filter needs random_filter_rate or random_filter_source".into(),
        ));
    };
    Ok(AgentConfig {
        variant: cfg.variant,
        hyper: cfg.hyper.clone(),
        hidden: cfg.hidden.clone(),
        shared_policy_trunk: cfg.shared_policy_trunk,
        normalize_obs: cfg.normalize_obs,
        median_accepted_only: cfg.median_accepted_only,
        returns_on_accepted_only: cfg.returns_on_accepted_only,
        adjusted_vex_predictors: cfg.adjusted_vex_predictors,
        reward_scale: cfg.reward_scale,
        random_rejection,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeedOutcome {
    pub seed: u64,
    pub updates: usize,
    /// Why the seed stopped early, if it did.
    pub error: Option<String>,
}

impl SeedOutcome {
    pub fn completed(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub seeds: Vec<SeedOutcome>,
}

impl RunOutcome {
    pub fn all_completed(&self) -> bool {
        self.seeds.iter().all(SeedOutcome::completed)
    }
}

/// Trains one seed, streaming its metrics to disk.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> SeedOutcome {
    let mut updates = 0;
    let result = (|| -> Result<()> {
        let agent_cfg = agent_config(cfg, seed)?;
        let mut agent = Agent::new(&cfg.env, agent_cfg, seed)?;
        let mut writer = MetricsWriter::create(
            &seed_metrics_path(&cfg.out_dir, seed),
            &seed_timing_path(&cfg.out_dir, seed),
        )?;
        let schedule = TrainSchedule {
            total_steps: cfg.total_steps,
            eval_every: cfg.eval_every,
            eval_episodes: cfg.eval_episodes,
        };
        agent.train(schedule, |rec| {
            updates = rec.update;
            writer.write(rec)
        })?;
        agent.checkpoint().save(&seed_checkpoint_path(&cfg.out_dir, seed))
    })();
    SeedOutcome {
        seed,
        updates,
        error: result.err().map(|e| e.to_string()),
    }
}

/// Runs every seed of `cfg` (in parallel) and writes the summary. Seeds that
/// fail are reported in the outcome and the summary; the others still run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let seeds = cfg.effective_seeds()?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    // The archive lists the seeds that actually ran.
    let archived = ExperimentConfig {
        seeds: seeds.clone(),
        ..cfg.clone()
    };
    let config_path = cfg.out_dir.join(CONFIG_FILE);
    std::fs::write(&config_path, archived.to_kv_string()).map_err(|e| Error::io(&config_path, e))?;

    let outcomes: Vec<SeedOutcome> = seeds.par_iter().map(|&s| run_seed(cfg, s)).collect();
    write_summary(&cfg.out_dir, &outcomes)?;
    Ok(RunOutcome {
        dir: cfg.out_dir.clone(),
        seeds: outcomes,
    })
}

/// Cross-seed statistics per evaluated update, computed from the per-seed
/// files of completed seeds.
pub fn write_summary(dir: &Path, outcomes: &[SeedOutcome]) -> Result<()> {
    #[derive(Default)]
    struct Acc {
        steps: Vec<f64>,
        evals: Vec<f64>,
        returns: Vec<f64>,
    }
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.completed())
        .map(|o| o.seed.to_string())
        .collect();
    let failed = failed.join(";");
    let mut by_update: BTreeMap<u64, Acc> = BTreeMap::new();
    for o in outcomes.iter().filter(|o| o.completed()) {
        let table = MetricsTable::read(&seed_metrics_path(dir, o.seed))?;
        let update = table.column("update")?;
        let steps = table.column("env_steps")?;
        let evals = table.column("eval_return")?;
        let returns = table.column("return_mean")?;
        for i in 0..update.len() {
            if let (Some(u), Some(e)) = (update[i], evals[i]) {
                let acc = by_update.entry(u as u64).or_default();
                acc.steps.push(steps[i].unwrap_or(f64::NAN));
                acc.evals.push(e);
                if let Some(r) = returns[i] {
                    acc.returns.push(r);
                }
            }
        }
    }
    let path = dir.join(SUMMARY_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
    w.write_record(SUMMARY_COLUMNS).map_err(|e| Error::csv(&path, e))?;
    for (u, acc) in &by_update {
        let (steps, _) = mean_std(&acc.steps);
        let (em, es) = mean_std(&acc.evals);
        let (rm, rs) = if acc.returns.is_empty() {
            (String::new(), String::new())
        } else {
            let (m, s) = mean_std(&acc.returns);
            (fmt_f64(m), fmt_f64(s))
        };
        w.write_record([
            u.to_string(),
            fmt_f64(steps),
            acc.evals.len().to_string(),
            fmt_f64(em),
            fmt_f64(es),
            rm,
            rs,
            failed.clone(),
        ])
        .map_err(|e| Error::csv(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

/// The default comparison grid: every environment of `envs` crossed with
/// [`SUITE_VARIANTS`], written to `out/<env>/<variant>/`. `overrides` are
/// `key=value` assignments applied on top of each environment's preset.
pub fn run_suite(out: &Path, envs: &[&str], overrides: &[String]) -> Result<Vec<RunOutcome>> {
    let mut outcomes = Vec::new();
    for env in envs {
        let mut base = preset(env)?;
        for o in overrides {
            base.apply_override(o)?;
        }
        for variant in SUITE_VARIANTS {
            let mut cfg = base.clone();
            cfg.env = env.to_string();
            cfg.variant = variant;
            cfg.out_dir = out.join(env).join(variant.name());
            if variant == Variant::RandomFilter {
                cfg.random_filter_source = Some(out.join(env).join(Variant::Sauna.name()));
            }
            outcomes.push(run_experiment(&cfg)?);
        }
    }
    Ok(outcomes)
}
