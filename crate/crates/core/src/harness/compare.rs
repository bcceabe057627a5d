//! Final-performance comparison of two runs.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::experiment::{seed_metrics_path, CONFIG_FILE};
use crate::harness::metrics::{fmt_f64, mean_std, MetricsTable};

/// Evaluations averaged into a seed's final performance.
pub const FINAL_EVALS: usize = 10;

/// Keys that must agree for two runs to be comparable.
const SCHEDULE_KEYS: [&str; 4] = ["env", "total_steps", "horizon", "eval_every"];

/// A run directory and its archived configuration.
#[derive(Clone, Debug)]
pub struct RunDir {
    pub path: PathBuf,
    pub config: ExperimentConfig,
}

/// Every run directory at or below `root`, sorted by path.
pub fn find_runs(root: &Path) -> Result<Vec<RunDir>> {
    if !root.is_dir() {
        return Err(Error::Usage(format!("{} is not a directory", root.display())));
    }
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let cfg = dir.join(CONFIG_FILE);
        if cfg.is_file() {
            out.push(RunDir {
                config: ExperimentConfig::load(&cfg)?,
                path: dir.clone(),
            });
        }
        for entry in std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let p = entry.map_err(|e| Error::io(&dir, e))?.path();
            if p.is_dir() {
                stack.push(p);
            }
        }
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

/// Seeds of a run that left a metrics file, from its configuration.
fn seed_files(run: &RunDir) -> Vec<(u64, PathBuf)> {
    run.config
        .seeds
        .iter()
        .map(|&s| (s, seed_metrics_path(&run.path, s)))
        .filter(|(_, p)| p.is_file())
        .collect()
}

/// Mean of the last [`FINAL_EVALS`] evaluation returns of one seed.
pub fn final_performance(metrics_csv: &Path) -> Result<f64> {
    let evals: Vec<f64> = MetricsTable::read(metrics_csv)?
        .column("eval_return")?
        .into_iter()
        .flatten()
        .collect();
    if evals.is_empty() {
        return Err(Error::Usage(format!("{} has no evaluations", metrics_csv.display())));
    }
    let tail = &evals[evals.len().saturating_sub(FINAL_EVALS)..];
    Ok(tail.iter().sum::<f64>() / tail.len() as f64)
}

/// Per-seed final performances of a run.
pub fn run_final_performances(run: &RunDir) -> Result<Vec<(u64, f64)>> {
    let files = seed_files(run);
    if files.is_empty() {
        return Err(Error::Usage(format!("{} has no seed metrics", run.path.display())));
    }
    files
        .into_iter()
        .map(|(s, p)| Ok((s, final_performance(&p)?)))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub env: String,
    pub a_variant: String,
    pub a_mean: f64,
    pub a_std: f64,
    pub b_variant: String,
    pub b_mean: f64,
    pub b_std: f64,
    /// `(b − a) / |a| · 100`.
    pub improvement_pct: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

pub const COMPARISON_COLUMNS: [&str; 8] = [
    "env",
    "a_variant",
    "a_mean",
    "a_std",
    "b_variant",
    "b_mean",
    "b_std",
    "improvement_pct",
];

impl ComparisonTable {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::Usage(format!("formatting comparison: {e}"));
        w.write_record(COMPARISON_COLUMNS).map_err(err)?;
        for r in &self.rows {
            w.write_record([
                r.env.clone(),
                r.a_variant.clone(),
                fmt_f64(r.a_mean),
                fmt_f64(r.a_std),
                r.b_variant.clone(),
                fmt_f64(r.b_mean),
                fmt_f64(r.b_std),
                fmt_f64(r.improvement_pct),
            ])
            .map_err(err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Usage(format!("formatting comparison: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<12} {:>24} {:>24} {:>12}",
            "env", "A mean ± std", "B mean ± std", "B vs A"
        )?;
        for r in &self.rows {
            let a = format!("{:.1} ± {:.1}", r.a_mean, r.a_std);
            let b = format!("{:.1} ± {:.1}", r.b_mean, r.b_std);
            writeln!(
                f,
                "{:<12} {:>24} {:>24} {:>11.1}%",
                r.env, a, b, r.improvement_pct
            )?;
            writeln!(f, "{:<12} {:>24} {:>24}", "", r.a_variant, r.b_variant)?;
        }
        Ok(())
    }
}

fn one_run_per_env<'a>(runs: &'a [RunDir], env: &str, side: &str) -> Result<Option<&'a RunDir>> {
    let matching: Vec<&RunDir> = runs.iter().filter(|r| r.config.env == env).collect();
    match matching.len() {
        0 => Ok(None),
        1 => Ok(Some(matching[0])),
        _ => Err(Error::Usage(format!(
            "{side} holds several {env} runs: {}",
            matching
                .iter()
                .map(|r| r.path.display().to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ))),
    }
}

/// Compares run (or run collection) `a` against `b`, one row per
/// environment present in both.
pub fn compare(a: &Path, b: &Path) -> Result<ComparisonTable> {
    let runs_a = find_runs(a)?;
    let runs_b = find_runs(b)?;
    let mut envs: Vec<String> = runs_a.iter().map(|r| r.config.env.clone()).collect();
    envs.sort();
    envs.dedup();
    let mut table = ComparisonTable::default();
    for env in envs {
        let (Some(ra), Some(rb)) = (
            one_run_per_env(&runs_a, &env, "A")?,
            one_run_per_env(&runs_b, &env, "B")?,
        ) else {
            continue;
        };
        for key in SCHEDULE_KEYS {
            let (va, vb) = (ra.config.get(key), rb.config.get(key));
            if va != vb {
                return Err(Error::Usage(format!(
                    "runs differ in {key}: {} vs {}",
                    va.unwrap_or_default(),
                    vb.unwrap_or_default()
                )));
            }
        }
        let pa: Vec<f64> = run_final_performances(ra)?.into_iter().map(|x| x.1).collect();
        let pb: Vec<f64> = run_final_performances(rb)?.into_iter().map(|x| x.1).collect();
        let (a_mean, a_std) = mean_std(&pa);
        let (b_mean, b_std) = mean_std(&pb);
        table.rows.push(ComparisonRow {
            env,
            a_variant: ra.config.variant.to_string(),
            a_mean,
            a_std,
            b_variant: rb.config.variant.to_string(),
            b_mean,
            b_std,
            improvement_pct: (b_mean - a_mean) / a_mean.abs() * 100.0,
        });
    }
    if table.rows.is_empty() {
        return Err(Error::Usage(format!(
            "no environment appears in both {} and {}",
            a.display(),
            b.display()
        )));
    }
    Ok(table)
}
