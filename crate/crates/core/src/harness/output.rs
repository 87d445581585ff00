//! Trace CSV and summary JSON files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ConfigError, ExperimentConfig, RunArtifact, RunSummary, Seeds};
use crate::protocols::EpochTrace;
use crate::Result;

pub const TRACE_HEADER: [&str; 5] = [
    "epoch",
    "cumulative_seconds",
    "train_loss",
    "test_accuracy",
    "contributors",
];

#[derive(Serialize, Deserialize)]
struct SummaryFile {
    config_hash: String,
    config: ExperimentConfig,
    seeds: Seeds,
    summary: RunSummary,
}

fn csv_error(path: &Path, e: csv::Error) -> crate::Error {
    ConfigError::new(path.display().to_string(), e.to_string()).into()
}

/// Writes `trace.csv` and `summary.json` into `dir`.
pub fn write_artifact(dir: &Path, art: &RunArtifact) -> Result<()> {
    fs::create_dir_all(dir)?;
    let path = dir.join("trace.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
    w.write_record(TRACE_HEADER)
        .map_err(|e| csv_error(&path, e))?;
    for t in &art.traces {
        let contributors: Vec<String> = t.contributors.iter().map(|c| c.to_string()).collect();
        w.write_record([
            t.epoch.to_string(),
            t.cumulative_seconds.to_string(),
            t.train_loss.to_string(),
            t.test_accuracy.to_string(),
            contributors.join(";"),
        ])
        .map_err(|e| csv_error(&path, e))?;
    }
    w.flush()?;
    let summary = SummaryFile {
        config_hash: art.config_hash.clone(),
        config: art.config.clone(),
        seeds: art.seeds,
        summary: art.summary.clone(),
    };
    let mut json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    json.push('\n');
    fs::write(dir.join("summary.json"), json)?;
    Ok(())
}

/// Reads `summary.json` from `dir`.
pub fn read_summary(dir: &Path) -> Result<(String, ExperimentConfig, RunSummary)> {
    let path = dir.join("summary.json");
    let text = fs::read_to_string(&path)?;
    let s: SummaryFile = serde_json::from_str(&text)
        .map_err(|e| ConfigError::new(path.display().to_string(), e.to_string()))?;
    Ok((s.config_hash, s.config, s.summary))
}

/// Reads a run directory back into an artifact.
pub fn read_trace(dir: &Path) -> Result<RunArtifact> {
    let (hash, config, summary) = read_summary(dir)?;
    let path = dir.join("trace.csv");
    let mut r = csv::Reader::from_path(&path).map_err(|e| csv_error(&path, e))?;
    let bad =
        |m: String| -> crate::Error { ConfigError::new(path.display().to_string(), m).into() };
    let mut traces = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(&path, e))?;
        if rec.len() != TRACE_HEADER.len() {
            return Err(bad(format!("row with {} columns", rec.len())));
        }
        let num = |i: usize| {
            rec[i]
                .parse::<f64>()
                .map_err(|e| bad(format!("{}: {e}", TRACE_HEADER[i])))
        };
        let contributors = if rec[4].is_empty() {
            Vec::new()
        } else {
            rec[4]
                .split(';')
                .map(|s| {
                    s.parse::<usize>()
                        .map_err(|e| bad(format!("contributors: {e}")))
                })
                .collect::<Result<_>>()?
        };
        traces.push(EpochTrace {
            epoch: rec[0].parse().map_err(|e| bad(format!("epoch: {e}")))?,
            cumulative_seconds: num(1)?,
            train_loss: num(2)?,
            test_accuracy: num(3)?,
            contributors,
            scheme: config.scheme,
            config_hash: hash.clone(),
        });
    }
    Ok(RunArtifact {
        config_hash: hash,
        seeds: config.seeds,
        config,
        traces,
        summary,
    })
}
