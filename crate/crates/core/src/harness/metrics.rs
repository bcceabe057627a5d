//! Per-update metrics CSV files.
//!
//! One file per seed, one row per update, columns in [`METRIC_COLUMNS`]
//! order. Missing values (no finished episode, no evaluation at that update)
//! are empty fields. Wall-clock times go to a separate timing file so that
//! the metrics themselves are reproducible byte for byte.

use std::fs::File;
use std::path::{Path, PathBuf};

use crate::agent::UpdateRecord;
use crate::error::{Error, Result};

pub const METRIC_COLUMNS: [&str; 19] = [
    "update",
    "env_steps",
    "accepted_steps",
    "episodes",
    "return_mean",
    "return_std",
    "eval_return",
    "vex_batch",
    "rejection_fraction",
    "grad_l1_first_layer",
    "grad_l1_last_layer",
    "grad_l1_layers",
    "surrogate_loss",
    "value_loss",
    "vex_loss",
    "entropy",
    "approx_kl",
    "clip_fraction",
    "skipped_minibatches",
];

/// Columns holding a single number per row.
pub fn numeric_metrics() -> impl Iterator<Item = &'static str> {
    METRIC_COLUMNS
        .into_iter()
        .filter(|c| *c != "update" && *c != "grad_l1_layers")
}

/// Shortest text that parses back to the same value.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn record_row(r: &UpdateRecord) -> Vec<String> {
    let rep = &r.report;
    vec![
        r.update.to_string(),
        r.env_steps.to_string(),
        r.accepted_steps.to_string(),
        r.episodes.to_string(),
        fmt_opt(r.return_mean),
        fmt_opt(r.return_std),
        fmt_opt(r.eval_return),
        fmt_f64(r.vex_batch),
        fmt_f64(r.rejection_fraction),
        fmt_f64(rep.grad_l1_first_layer()),
        fmt_f64(rep.grad_l1_last_layer()),
        rep.grad_l1_layers
            .iter()
            .map(|g| fmt_f64(*g))
            .collect::<Vec<_>>()
            .join(";"),
        fmt_f64(rep.surrogate_loss),
        fmt_f64(rep.value_loss),
        fmt_f64(rep.vex_loss),
        fmt_f64(rep.entropy),
        fmt_f64(rep.approx_kl),
        fmt_f64(rep.clip_fraction),
        rep.skipped_minibatches.to_string(),
    ]
}

/// Append-only writer for one seed's metrics and timing files.
pub struct MetricsWriter {
    metrics: csv::Writer<File>,
    timing: csv::Writer<File>,
    metrics_path: PathBuf,
    timing_path: PathBuf,
}

impl MetricsWriter {
    pub fn create(metrics_path: &Path, timing_path: &Path) -> Result<Self> {
        let open = |p: &Path| -> Result<csv::Writer<File>> {
            let f = File::create(p).map_err(|e| Error::io(p, e))?;
            Ok(csv::Writer::from_writer(f))
        };
        let mut w = Self {
            metrics: open(metrics_path)?,
            timing: open(timing_path)?,
            metrics_path: metrics_path.to_path_buf(),
            timing_path: timing_path.to_path_buf(),
        };
        w.metrics
            .write_record(METRIC_COLUMNS)
            .map_err(|e| Error::csv(&w.metrics_path, e))?;
        w.timing
            .write_record(["update", "wall_ms"])
            .map_err(|e| Error::csv(&w.timing_path, e))?;
        Ok(w)
    }

    pub fn write(&mut self, r: &UpdateRecord) -> Result<()> {
        self.metrics
            .write_record(record_row(r))
            .map_err(|e| Error::csv(&self.metrics_path, e))?;
        self.metrics
            .flush()
            .map_err(|e| Error::io(&self.metrics_path, e))?;
        self.timing
            .write_record([r.update.to_string(), format!("{:.3}", r.wall_ms)])
            .map_err(|e| Error::csv(&self.timing_path, e))?;
        self.timing.flush().map_err(|e| Error::io(&self.timing_path, e))
    }
}

/// A metrics file read back as text columns.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl MetricsTable {
    pub fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let header = rdr
            .headers()
            .map_err(|e| Error::csv(path, e))?
            .iter()
            .map(String::from)
            .collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            rows.push(rec.iter().map(String::from).collect());
        }
        Ok(Self { header, rows })
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.header.iter().position(|h| h == name).ok_or_else(|| {
            Error::Usage(format!(
                "unknown metric {name:?}; available: {}",
                numeric_metrics().collect::<Vec<_>>().join(", ")
            ))
        })
    }

    /// Numeric column; empty fields are `None`.
    pub fn column(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let i = self.index(name)?;
        self.rows
            .iter()
            .map(|r| {
                let s = r[i].trim();
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse::<f64>().map(Some).map_err(|_| {
                        Error::Usage(format!("column {name} holds non-numeric value {s:?}"))
                    })
                }
            })
            .collect()
    }
}

/// Mean and sample standard deviation (`n − 1` denominator; 0 for a single
/// value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std_by_hand() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[3.5]), (3.5, 0.0));
    }

    #[test]
    fn float_text_round_trips() {
        for x in [0.1, -1234.5678e-9, 1.0 / 3.0, 2.0f64.sqrt()] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn rows_match_the_header() {
        let row = record_row(&UpdateRecord::default());
        assert_eq!(row.len(), METRIC_COLUMNS.len());
        assert_eq!(row[4], "");
    }
}
