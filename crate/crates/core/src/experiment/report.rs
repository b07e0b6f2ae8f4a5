use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One estimator call on one replicate of one setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub estimator: String,
    pub setup: usize,
    /// Replicate index.
    pub seed: u64,
    pub psi_hat: Option<f64>,
    pub psi_true: f64,
    pub abs_err: Option<f64>,
    pub wall_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Mean and sample standard deviation of `abs_err` over the successful runs
/// of one estimator on one setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub estimator: String,
    pub setup: usize,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config_fingerprint: String,
    /// Milliseconds since the Unix epoch when the sweep finished.
    pub created_unix_ms: u64,
    pub runs: Vec<RunRecord>,
    pub aggregates: Vec<Aggregate>,
}

/// Mean and sample (n − 1) standard deviation; the deviation of fewer than
/// two values is reported as zero.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    (mean, std)
}

/// Aggregates in order of first appearance of each (estimator, setup) pair.
/// Pairs whose runs all failed get `n = 0` and are left out.
pub fn aggregate(runs: &[RunRecord]) -> Vec<Aggregate> {
    let mut keys: Vec<(String, usize)> = Vec::new();
    for r in runs {
        let key = (r.estimator.clone(), r.setup);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .filter_map(|(estimator, setup)| {
            let errs: Vec<f64> = runs
                .iter()
                .filter(|r| r.estimator == estimator && r.setup == setup)
                .filter_map(|r| r.abs_err)
                .collect();
            if errs.is_empty() {
                return None;
            }
            let (mean, std) = mean_std(&errs);
            Some(Aggregate {
                estimator,
                setup,
                mean,
                std,
                n: errs.len(),
            })
        })
        .collect()
}

impl BenchmarkReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let report: BenchmarkReport = serde_json::from_str(&text)?;
        report.check()?;
        Ok(report)
    }

    /// Checks that the stored aggregates match the per-run records.
    pub fn check(&self) -> Result<()> {
        let recomputed = aggregate(&self.runs);
        let matches = recomputed.len() == self.aggregates.len()
            && recomputed.iter().zip(&self.aggregates).all(|(a, b)| {
                a.estimator == b.estimator
                    && a.setup == b.setup
                    && a.n == b.n
                    && (a.mean - b.mean).abs() <= 1e-12
                    && (a.std - b.std).abs() <= 1e-12
            });
        if matches {
            Ok(())
        } else {
            Err(Error::Contract("report aggregates do not match its run records".into()))
        }
    }

    /// Estimators x setups grid of `mean ± std` cells. Rows follow the
    /// order in which estimators appear; `*` marks the lowest mean error in
    /// each setup column.
    pub fn render_table(&self) -> String {
        let mut rows: Vec<&str> = Vec::new();
        let mut cols: Vec<usize> = Vec::new();
        for a in &self.aggregates {
            if !rows.contains(&a.estimator.as_str()) {
                rows.push(&a.estimator);
            }
            if !cols.contains(&a.setup) {
                cols.push(a.setup);
            }
        }
        cols.sort_unstable();
        let cell = |est: &str, setup: usize| self.aggregates.iter().find(|a| a.estimator == est && a.setup == setup);
        let best: Vec<Option<&str>> = cols
            .iter()
            .map(|&s| {
                self.aggregates
                    .iter()
                    .filter(|a| a.setup == s)
                    .min_by(|x, y| x.mean.total_cmp(&y.mean))
                    .map(|a| a.estimator.as_str())
            })
            .collect();
        let header: Vec<String> = std::iter::once("estimator".to_string())
            .chain(cols.iter().map(|s| format!("setup {s}")))
            .collect();
        let mut table: Vec<Vec<String>> = vec![header];
        for est in &rows {
            let mut line = vec![est.to_string()];
            for (j, &s) in cols.iter().enumerate() {
                line.push(match cell(est, s) {
                    Some(a) => {
                        let mark = if best[j] == Some(*est) { " *" } else { "" };
                        format!("{:.3} ± {:.3}{mark}", a.mean, a.std)
                    }
                    None => "-".into(),
                });
            }
            table.push(line);
        }
        let widths: Vec<usize> = (0..table[0].len())
            .map(|j| table.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, row) in table.iter().enumerate() {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(j, (c, w))| {
                    let pad = w - c.chars().count();
                    if j == 0 {
                        format!("{c}{}", " ".repeat(pad))
                    } else {
                        format!("{}{c}", " ".repeat(pad))
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
            if i == 0 {
                let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
                let _ = writeln!(out, "{}", "-".repeat(total));
            }
        }
        out
    }
}
