//! Long-format plot data for any numeric metric.
//!
//! `<metric>_long.csv` has one row per (run, seed, update) with columns
//! `steps, variant, seed, value, env`; `<metric>_summary.csv` aggregates
//! seeds per update with columns `steps, variant, mean, std, env`, where
//! `steps` is the mean visited-step count of the contributing seeds and
//! `std` the sample standard deviation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::compare::find_runs;
use crate::harness::experiment::seed_metrics_path;
use crate::harness::metrics::{fmt_f64, mean_std, numeric_metrics, MetricsTable};

pub const LONG_COLUMNS: [&str; 5] = ["steps", "variant", "seed", "value", "env"];
pub const SUMMARY_COLUMNS: [&str; 5] = ["steps", "variant", "mean", "std", "env"];

#[derive(Clone, Debug, PartialEq)]
pub struct LongRow {
    pub steps: f64,
    pub variant: String,
    pub seed: u64,
    pub value: f64,
    pub env: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub steps: f64,
    pub variant: String,
    pub mean: f64,
    pub std: f64,
    pub env: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlotData {
    pub long: Vec<LongRow>,
    pub summary: Vec<SummaryRow>,
}

/// Collects `metric` from every run found under `dirs`.
pub fn plot_data(metric: &str, dirs: &[PathBuf]) -> Result<PlotData> {
    if !numeric_metrics().any(|m| m == metric) {
        return Err(Error::Usage(format!(
            "unknown metric {metric:?}; available: {}",
            numeric_metrics().collect::<Vec<_>>().join(", ")
        )));
    }
    let mut data = PlotData::default();
    for dir in dirs {
        let runs = find_runs(dir)?;
        if runs.is_empty() {
            return Err(Error::Usage(format!("no runs under {}", dir.display())));
        }
        for run in runs {
            let variant = run.config.variant.to_string();
            let env = run.config.env.clone();
            let mut per_update: BTreeMap<u64, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
            for &seed in &run.config.seeds {
                let path = seed_metrics_path(&run.path, seed);
                if !path.is_file() {
                    continue;
                }
                let table = MetricsTable::read(&path)?;
                let update = table.column("update")?;
                let steps = table.column("env_steps")?;
                let values = table.column(metric)?;
                for i in 0..values.len() {
                    let (Some(u), Some(s), Some(v)) = (update[i], steps[i], values[i]) else {
                        continue;
                    };
                    data.long.push(LongRow {
                        steps: s,
                        variant: variant.clone(),
                        seed,
                        value: v,
                        env: env.clone(),
                    });
                    let e = per_update.entry(u as u64).or_default();
                    e.0.push(s);
                    e.1.push(v);
                }
            }
            for (steps, values) in per_update.values() {
                let (mean, std) = mean_std(values);
                data.summary.push(SummaryRow {
                    steps: mean_std(steps).0,
                    variant: variant.clone(),
                    mean,
                    std,
                    env: env.clone(),
                });
            }
        }
    }
    Ok(data)
}

impl PlotData {
    /// Writes `<metric>_long.csv` and `<metric>_summary.csv` into `out` and
    /// returns their paths.
    pub fn write(&self, out: &Path, metric: &str) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let long_path = out.join(format!("{metric}_long.csv"));
        let mut w = csv::Writer::from_path(&long_path).map_err(|e| Error::csv(&long_path, e))?;
        w.write_record(LONG_COLUMNS).map_err(|e| Error::csv(&long_path, e))?;
        for r in &self.long {
            w.write_record([
                fmt_f64(r.steps),
                r.variant.clone(),
                r.seed.to_string(),
                fmt_f64(r.value),
                r.env.clone(),
            ])
            .map_err(|e| Error::csv(&long_path, e))?;
        }
        w.flush().map_err(|e| Error::io(&long_path, e))?;

        let summary_path = out.join(format!("{metric}_summary.csv"));
        let mut w =
            csv::Writer::from_path(&summary_path).map_err(|e| Error::csv(&summary_path, e))?;
        w.write_record(SUMMARY_COLUMNS)
            .map_err(|e| Error::csv(&summary_path, e))?;
        for r in &self.summary {
            w.write_record([
                fmt_f64(r.steps),
                r.variant.clone(),
                fmt_f64(r.mean),
                fmt_f64(r.std),
                r.env.clone(),
            ])
            .map_err(|e| Error::csv(&summary_path, e))?;
        }
        w.flush().map_err(|e| Error::io(&summary_path, e))?;
        Ok((long_path, summary_path))
    }
}
