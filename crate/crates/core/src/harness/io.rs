use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::campaign::{CampaignResult, CampaignSummary, GammaRow, ReplicationFailure};
use super::config::ExperimentConfig;
use super::metrics::{RunMetrics, SeriesRow, StepRecord};
use crate::error::{Error, Result};

pub const SERIES_FILE: &str = "series.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const LOG_FILE: &str = "log.csv";

#[derive(Serialize, Deserialize)]
struct RunSummaryFile {
    config: ExperimentConfig,
    metrics: RunMetrics,
}

fn format_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!("checked above"),
        }
    } else {
        format_err(path, e)
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| csv_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| format_err(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes `series.csv`, `summary.json` (config echo and scalar metrics)
/// and, when present, `log.csv` into `dir`. Returns the written paths.
pub fn write_results(
    metrics: &RunMetrics,
    config: &ExperimentConfig,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let series = dir.join(SERIES_FILE);
    write_csv(&series, &metrics.series)?;
    let summary = dir.join(SUMMARY_FILE);
    let mut scalar = metrics.clone();
    scalar.series.clear();
    scalar.log = None;
    write_json(
        &summary,
        &RunSummaryFile {
            config: config.clone(),
            metrics: scalar,
        },
    )?;
    let mut written = vec![series, summary];
    if let Some(log) = &metrics.log {
        let path = dir.join(LOG_FILE);
        write_csv(&path, log)?;
        written.push(path);
    }
    Ok(written)
}

/// Reads back what [`write_results`] wrote.
pub fn read_results(dir: &Path) -> Result<(ExperimentConfig, RunMetrics)> {
    let summary = dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&summary).map_err(|e| Error::io(&summary, e))?;
    let file: RunSummaryFile = serde_json::from_str(&text).map_err(|e| format_err(&summary, e))?;
    let mut metrics = file.metrics;
    metrics.series = read_csv::<SeriesRow>(&dir.join(SERIES_FILE))?;
    let log = dir.join(LOG_FILE);
    if log.exists() {
        metrics.log = Some(read_csv::<StepRecord>(&log)?);
    }
    Ok((file.config, metrics))
}

#[derive(Serialize)]
struct CampaignFile<'a> {
    config: &'a ExperimentConfig,
    summary: &'a CampaignSummary,
    failures: &'a [ReplicationFailure],
}

/// Writes the campaign summary to `dir/summary.json` and each run to
/// `dir/seed_<seed>/`.
pub fn write_campaign(
    result: &CampaignResult,
    config: &ExperimentConfig,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let summary = dir.join(SUMMARY_FILE);
    write_json(
        &summary,
        &CampaignFile {
            config,
            summary: &result.summary,
            failures: &result.failures,
        },
    )?;
    let mut written = vec![summary];
    for run in &result.runs {
        written.extend(write_results(run, config, &dir.join(format!("seed_{}", run.seed)))?);
    }
    Ok(written)
}

#[derive(Serialize)]
struct GammaCsvRow {
    gamma: f64,
    target_pulls_mean: f64,
    target_pulls_std: f64,
    cost_mean: f64,
    cost_std: f64,
    failures: usize,
}

/// Writes the sweep table as CSV.
pub fn write_gamma_table(rows: &[GammaRow], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let flat: Vec<GammaCsvRow> = rows
        .iter()
        .map(|r| GammaCsvRow {
            gamma: r.gamma,
            target_pulls_mean: r.target_pulls.mean,
            target_pulls_std: r.target_pulls.std,
            cost_mean: r.total_cost.mean,
            cost_std: r.total_cost.std,
            failures: r.failures,
        })
        .collect();
    write_csv(path, &flat)
}
