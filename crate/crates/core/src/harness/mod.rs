//! Experiment runner: configuration with file and command-line layers,
//! dataset caching, seeded runs, sweeps and trace output.

mod output;
mod run;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::fxp::FxConfig;
use crate::latency::{LinkParams, DEFAULT_SERVER_RATE};
use crate::learning::LrSchedule;
use crate::protocols::{ConventionalParams, PaddedParams, Scheme, SecAggParams};

pub use output::{read_summary, read_trace, write_artifact, TRACE_HEADER};
pub use run::{
    data_cache_key, load_data, run, run_with_data, sweep, time_to_accuracy, RunArtifact,
    RunSummary, SweepRun, TargetTime,
};

/// A configuration problem tied to a dotted field path.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    Synthetic,
    Mnist,
    FashionMnist,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub features: usize,
    pub classes: usize,
    pub train: usize,
    pub test: usize,
    pub separation: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            features: 20,
            classes: 3,
            train: 600,
            test: 200,
            separation: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    /// Directory holding the IDX files for `mnist` and `fashion-mnist`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_limit: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_limit: Option<usize>,
    pub synthetic: SyntheticConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            dir: None,
            train_limit: None,
            test_limit: None,
            synthetic: SyntheticConfig::default(),
        }
    }
}

/// Random Fourier feature embedding; `features = 0` keeps raw features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingConfig {
    pub features: usize,
    pub gamma: f64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            features: 0,
            gamma: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixedPointConfig {
    pub k: u32,
    pub f: u32,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            k: FxConfig::PAPER.k(),
            f: FxConfig::PAPER.f(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateMix {
    /// Deterministic tiers by device index.
    Tiered,
    /// Tiers drawn per device from the latency seed.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatencyConfig {
    pub server_rate: f64,
    pub link: LinkParams,
    pub rate_mix: RateMix,
    /// Explicit per-device MAC rates; overrides `rate_mix`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rates: Option<Vec<f64>>,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        Self {
            server_rate: DEFAULT_SERVER_RATE,
            link: LinkParams::LTE_CAT1,
            rate_mix: RateMix::Tiered,
            rates: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub data: u64,
    pub protocol: u64,
    pub latency: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            data: 1,
            protocol: 2,
            latency: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scheme: Scheme,
    pub epochs: usize,
    pub devices: usize,
    pub lambda: f64,
    pub schedule: LrSchedule,
    pub fixed_point: FixedPointConfig,
    pub data: DataConfig,
    pub embedding: EmbeddingConfig,
    pub padded: PaddedParams,
    pub secagg: SecAggParams,
    pub conventional: ConventionalParams,
    pub latency: LatencyConfig,
    pub seeds: Seeds,
    /// Test accuracies reported as time-to-target in the summary.
    pub targets: Vec<f64>,
    /// Where embedded datasets are cached; no caching when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Padded,
            epochs: 100,
            devices: 6,
            lambda: 9e-6,
            schedule: LrSchedule::default(),
            fixed_point: FixedPointConfig::default(),
            data: DataConfig::default(),
            embedding: EmbeddingConfig::default(),
            padded: PaddedParams::default(),
            secagg: SecAggParams::default(),
            conventional: ConventionalParams::default(),
            latency: LatencyConfig::default(),
            seeds: Seeds::default(),
            targets: vec![0.8, 0.9],
            cache_dir: None,
        }
    }
}

/// Parses `key=value` with a dotted key.
pub fn parse_override(s: &str) -> Result<(String, String), ConfigError> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(ConfigError::new(s, "override must look like key=value")),
    }
}

/// Parses `raw` as a TOML value, falling back to a bare string.
fn override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Sets the dotted `key` inside `table`, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<(), ConfigError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::new(key, "empty path segment"));
    }
    let mut cur = table;
    for (i, part) in parts[..parts.len() - 1].iter().enumerate() {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(ConfigError::new(parts[..=i].join("."), "is not a table")),
        };
    }
    cur.insert(parts[parts.len() - 1].to_string(), override_value(raw));
    Ok(())
}

fn deserialize_table(table: toml::Table) -> Result<ExperimentConfig, ConfigError> {
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::new("config", e.message().to_string()))
}

impl ExperimentConfig {
    /// Layers `overrides` over the TOML `text` over the defaults, then
    /// validates.
    pub fn from_toml_str(text: &str, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| ConfigError::new("config", e.to_string()))?;
        for (k, v) in overrides {
            apply_override(&mut table, k, v)?;
        }
        let cfg = deserialize_table(table)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (if any) and applies `overrides`.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| ConfigError::new("config", format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    /// Copy with `overrides` applied on top of this configuration.
    pub fn with_overrides(&self, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut table = self.to_table()?;
        for (k, v) in overrides {
            apply_override(&mut table, k, v)?;
        }
        let cfg = deserialize_table(table)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn to_table(&self) -> Result<toml::Table, ConfigError> {
        toml::Table::try_from(self).map_err(|e| ConfigError::new("config", e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes to JSON");
        hex16(&Sha256::digest(&json))
    }

    pub fn fx(&self) -> Result<FxConfig, ConfigError> {
        FxConfig::new(self.fixed_point.k, self.fixed_point.f)
            .map_err(|e| ConfigError::new("fixed_point", e.to_string()))
    }

    /// Field-level checks, including the cross-field constraints of the
    /// selected scheme.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |f: &str, m: String| Err(ConfigError::new(f, m));
        let d = self.devices;
        if self.epochs == 0 {
            return err("epochs", "must be at least 1".into());
        }
        if d == 0 {
            return err("devices", "must be at least 1".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return err(
                "lambda",
                format!("{} must be finite and nonnegative", self.lambda),
            );
        }
        if !(self.schedule.base > 0.0 && self.schedule.base.is_finite()) {
            return err("schedule.base", "must be positive".into());
        }
        if !(self.schedule.factor > 0.0 && self.schedule.factor.is_finite()) {
            return err("schedule.factor", "must be positive".into());
        }
        self.fx()?;
        match self.data.source {
            DataSource::Synthetic => {
                let s = &self.data.synthetic;
                if s.features == 0 || s.classes == 0 || s.train == 0 {
                    return err(
                        "data.synthetic",
                        "features, classes and train must be positive".into(),
                    );
                }
                if s.train < d {
                    return err(
                        "data.synthetic.train",
                        format!("{} samples for {d} devices", s.train),
                    );
                }
            }
            DataSource::Mnist | DataSource::FashionMnist => {
                if self.data.dir.is_none() {
                    return err("data.dir", "required for IDX datasets".into());
                }
                if matches!(self.data.train_limit, Some(n) if n < d) {
                    return err(
                        "data.train_limit",
                        format!("fewer samples than the {d} devices"),
                    );
                }
            }
        }
        if self.embedding.features > 0
            && !(self.embedding.gamma > 0.0 && self.embedding.gamma.is_finite())
        {
            return err("embedding.gamma", "must be positive".into());
        }
        match self.scheme {
            Scheme::Padded => {
                let p = &self.padded;
                if p.groups == 0 || p.groups > d {
                    return err(
                        "padded.groups",
                        format!("N={} must lie in 1..={d}", p.groups),
                    );
                }
                let smallest = d / p.groups;
                if p.alpha == 0 || p.alpha > smallest {
                    return err(
                        "padded.alpha",
                        format!("alpha={} must lie in 1..={smallest}", p.alpha),
                    );
                }
                if !(p.code_tolerance_factor >= 1.0) {
                    return err("padded.code_tolerance_factor", "must be at least 1".into());
                }
                if matches!(p.code_frac_bits, Some(0)) {
                    return err("padded.code_frac_bits", "must be positive".into());
                }
            }
            Scheme::SecAgg => {
                let s = &self.secagg;
                if s.groups == 0 || !d.is_multiple_of(s.groups) {
                    return err("secagg.groups", format!("N={} must divide D={d}", s.groups));
                }
                if s.threshold == 0 || s.threshold > d / s.groups {
                    return err(
                        "secagg.threshold",
                        format!(
                            "k'={} must lie in 1..={} (group size)",
                            s.threshold,
                            d / s.groups
                        ),
                    );
                }
                if s.threshold <= s.collusion {
                    return err(
                        "secagg.collusion",
                        format!("k'={} must exceed z={}", s.threshold, s.collusion),
                    );
                }
            }
            Scheme::Conventional => {
                let c = &self.conventional;
                if !(c.minibatch_fraction > 0.0 && c.minibatch_fraction <= 1.0) {
                    return err(
                        "conventional.minibatch_fraction",
                        "must lie in (0, 1]".into(),
                    );
                }
                if c.drop_count >= d {
                    return err("conventional.drop_count", format!("must be below D={d}"));
                }
            }
        }
        let l = &self.latency;
        if !(l.server_rate > 0.0 && l.server_rate.is_finite()) {
            return err("latency.server_rate", "must be positive".into());
        }
        if let Err(e) = l.link.validate() {
            return err("latency.link", e.to_string());
        }
        if let Some(rates) = &l.rates {
            if rates.len() != d {
                return err(
                    "latency.rates",
                    format!("{} rates for {d} devices", rates.len()),
                );
            }
            if let Some(r) = rates.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
                return err("latency.rates", format!("rate {r} must be positive"));
            }
        }
        if let Some(t) = self.targets.iter().find(|t| !t.is_finite()) {
            return err("targets", format!("{t} is not finite"));
        }
        Ok(())
    }
}

pub(crate) fn hex16(bytes: &[u8]) -> String {
    bytes.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
