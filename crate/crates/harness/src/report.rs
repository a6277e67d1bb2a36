//! CSV output, JSON summaries and the accuracy table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use byzagg_core::stats::{mean, std_dev};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Result};
use crate::experiment::{ExperimentOutput, MetricsRow, RunResult};

pub const CSV_HEADER: &str = "seed,epoch,test_acc,train_loss,bytes_user,bytes_fed,wall_ms";

pub fn write_csv<'a>(path: &Path, rows: impl IntoIterator<Item = &'a MetricsRow>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Mean and sample standard deviation over seeds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        Self {
            mean: mean(xs),
            std: std_dev(xs),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleSummary {
    pub label: String,
    pub seeds: Vec<u64>,
    pub failed_seeds: Vec<u64>,
    /// Best test accuracy over epochs, in percent.
    pub max_accuracy: MeanStd,
    pub final_accuracy: MeanStd,
    pub bytes_user_per_round: f64,
    pub bytes_fed_per_round: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub compression_ratio: f64,
    pub rules: Vec<RuleSummary>,
}

pub fn summarize_runs<'a>(label: String, runs: impl IntoIterator<Item = &'a RunResult>) -> RuleSummary {
    let runs: Vec<&RunResult> = runs.into_iter().collect();
    let rows: Vec<&MetricsRow> = runs.iter().flat_map(|r| &r.rows).collect();
    let per_round = |f: fn(&MetricsRow) -> f64| {
        if rows.is_empty() {
            0.0
        } else {
            rows.iter().map(|r| f(r)).sum::<f64>() / rows.len() as f64
        }
    };
    RuleSummary {
        label,
        seeds: runs.iter().map(|r| r.seed).collect(),
        failed_seeds: runs.iter().filter(|r| r.failure.is_some()).map(|r| r.seed).collect(),
        max_accuracy: MeanStd::of(&runs.iter().map(|r| 100.0 * r.max_accuracy()).collect::<Vec<_>>()),
        final_accuracy: MeanStd::of(&runs.iter().map(|r| 100.0 * r.final_accuracy()).collect::<Vec<_>>()),
        bytes_user_per_round: per_round(|r| r.bytes_user),
        bytes_fed_per_round: per_round(|r| r.bytes_fed as f64),
    }
}

pub fn summarize(out: &ExperimentOutput) -> Summary {
    Summary {
        name: out.config.name.clone(),
        compression_ratio: out.compression_ratio(),
        rules: out
            .config
            .rules
            .iter()
            .map(|&rule| summarize_runs(rule.to_string(), out.runs_for(rule)))
            .collect(),
    }
}

/// Writes `<name>_<rule>.csv` for every rule and `<name>_summary.json` into
/// `dir`, returning the CSV paths.
pub fn write_outputs(dir: &Path, out: &ExperimentOutput) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut paths = Vec::new();
    for &rule in &out.config.rules {
        let path = dir.join(format!("{}_{rule}.csv", out.config.name));
        write_csv(&path, out.runs_for(rule).flat_map(|r| &r.rows))?;
        paths.push(path);
    }
    let json = dir.join(format!("{}_summary.json", out.config.name));
    let text = serde_json::to_string_pretty(&summarize(out))?;
    std::fs::write(&json, text + "\n").map_err(io_err(&json))?;
    Ok(paths)
}

/// Summary of a CSV written by [`write_outputs`]; rows are grouped by seed.
pub fn summarize_csv(path: &Path) -> Result<RuleSummary> {
    let rows = read_csv(path)?;
    let mut by_seed: BTreeMap<u64, Vec<MetricsRow>> = BTreeMap::new();
    for row in rows {
        by_seed.entry(row.seed).or_default().push(row);
    }
    let runs: Vec<RunResult> = by_seed
        .into_iter()
        .map(|(seed, rows)| RunResult {
            rule: crate::config::RuleVariant::ALL[0],
            seed,
            rows,
            failure: None,
        })
        .collect();
    let label = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
    Ok(summarize_runs(label, &runs))
}

/// Plain-text table: one line per summary with mean ± std of the best
/// accuracy.
pub fn format_table(rows: &[RuleSummary]) -> String {
    let width = rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(5);
    let mut s = format!("{:<width$}  {:>15}  {:>15}  {:>14}  {:>14}\n", "rule", "max acc (%)", "final acc (%)", "B/user/round", "B/fed/round");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<width$}  {:>7.1} ± {:<5.1}  {:>7.1} ± {:<5.1}  {:>14.0}  {:>14.0}{}",
            r.label,
            r.max_accuracy.mean,
            r.max_accuracy.std,
            r.final_accuracy.mean,
            r.final_accuracy.std,
            r.bytes_user_per_round,
            r.bytes_fed_per_round,
            if r.failed_seeds.is_empty() {
                String::new()
            } else {
                format!("  (failed seeds: {:?})", r.failed_seeds)
            }
        );
    }
    s
}
