//! Data preparation, single runs and sweeps.

use std::collections::HashMap;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{hex16, ConfigError, DataSource, ExperimentConfig, RateMix, Seeds};
use crate::latency::{
    mac_count, random_tier_rates, tiered_rates, DeviceProfile, LatencySampler, Workload,
};
use crate::learning::data::{embed_split, read_cache, synthetic, write_cache, SyntheticSpec};
use crate::learning::{
    accuracy, load_mnist_dir, partition_noniid, DataSplit, DevicePartition, FxPartition,
    LossEvaluator, ModelState,
};
use crate::protocols::{ConventionalFl, EpochTrace, PaddedFl, Protocol, Scheme, SecAgg};
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetTime {
    pub target: f64,
    pub seconds: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scheme: Scheme,
    pub epochs: usize,
    pub setup_seconds: f64,
    pub total_seconds: f64,
    pub mean_epoch_seconds: f64,
    pub epoch_seconds_variance: f64,
    pub final_train_loss: f64,
    pub final_test_accuracy: f64,
    pub best_test_accuracy: f64,
    pub time_to_target: Vec<TargetTime>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub seeds: Seeds,
    pub traces: Vec<EpochTrace>,
    pub summary: RunSummary,
}

/// First cumulative time at which the test accuracy reaches `target`.
pub fn time_to_accuracy(trace: &[EpochTrace], target: f64) -> Option<f64> {
    trace
        .iter()
        .find(|t| t.test_accuracy >= target)
        .map(|t| t.cumulative_seconds)
}

/// Cache key of the prepared dataset: source, embedding and data seed.
pub fn data_cache_key(cfg: &ExperimentConfig) -> String {
    let key = serde_json::json!({
        "data": cfg.data,
        "embedding": cfg.embedding,
        "seed": cfg.seeds.data,
    });
    hex16(&Sha256::digest(key.to_string().as_bytes()))
}

fn cache_path(cfg: &ExperimentConfig) -> Option<PathBuf> {
    cfg.cache_dir
        .as_ref()
        .map(|d| d.join(format!("{}.bin", data_cache_key(cfg))))
}

/// Loads or generates the dataset and applies the embedding, going
/// through the cache when `cache_dir` is set.
pub fn load_data(cfg: &ExperimentConfig) -> Result<DataSplit> {
    let path = cache_path(cfg);
    if let Some(p) = path.as_ref().filter(|p| p.is_file()) {
        return Ok(read_cache(p)?);
    }
    let raw = match cfg.data.source {
        DataSource::Synthetic => {
            let s = &cfg.data.synthetic;
            synthetic(
                &SyntheticSpec {
                    features: s.features,
                    classes: s.classes,
                    train: s.train,
                    test: s.test,
                    separation: s.separation,
                },
                cfg.seeds.data,
            )?
        }
        DataSource::Mnist | DataSource::FashionMnist => {
            let dir = cfg
                .data
                .dir
                .as_ref()
                .ok_or_else(|| ConfigError::new("data.dir", "required for IDX datasets"))?;
            load_mnist_dir(dir, cfg.data.train_limit, cfg.data.test_limit)?
        }
    };
    let split = if cfg.embedding.features > 0 {
        embed_split(
            &raw,
            cfg.embedding.gamma,
            cfg.embedding.features,
            cfg.seeds.data,
        )
    } else {
        raw
    };
    if let Some(p) = path {
        write_cache(&p, &split)?;
    }
    Ok(split)
}

fn device_rates(cfg: &ExperimentConfig) -> Vec<f64> {
    if let Some(r) = &cfg.latency.rates {
        return r.clone();
    }
    match cfg.latency.rate_mix {
        RateMix::Tiered => tiered_rates(cfg.devices),
        RateMix::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seeds.latency);
            rng.set_stream(0);
            random_tier_rates(cfg.devices, &mut rng)
        }
    }
}

fn sampler(cfg: &ExperimentConfig, workloads: &[u64]) -> Result<LatencySampler> {
    let profiles = device_rates(cfg)
        .into_iter()
        .zip(workloads)
        .map(|(tau, &rho)| DeviceProfile::with_half_setup(tau, rho as f64, cfg.latency.link))
        .collect();
    Ok(LatencySampler::new(
        profiles,
        cfg.latency.server_rate,
        cfg.seeds.latency,
    )?)
}

fn build_protocol(
    cfg: &ExperimentConfig,
    parts: &[DevicePartition],
    model: &ModelState,
) -> Result<(Box<dyn Protocol>, LatencySampler)> {
    let (d, c) = model.shape();
    let coded = mac_count(Workload::EpochGradient {
        d: d as u64,
        c: c as u64,
    });
    match cfg.scheme {
        Scheme::Padded | Scheme::SecAgg => {
            let mut lat = sampler(cfg, &vec![coded; parts.len()])?;
            let fx: Vec<FxPartition> = parts
                .iter()
                .map(|p| FxPartition::new(p, model.cfg()))
                .collect::<std::result::Result<_, _>>()?;
            let proto: Box<dyn Protocol> = if cfg.scheme == Scheme::Padded {
                Box::new(PaddedFl::setup(
                    &fx,
                    model.theta1(),
                    &cfg.padded,
                    cfg.seeds.protocol,
                    &mut lat,
                )?)
            } else {
                Box::new(SecAgg::setup(
                    &fx,
                    model.theta1(),
                    &cfg.secagg,
                    cfg.seeds.protocol,
                    &mut lat,
                )?)
            };
            Ok((proto, lat))
        }
        Scheme::Conventional => {
            let proto = ConventionalFl::new(parts, &cfg.conventional)?;
            let work: Vec<u64> = (0..parts.len())
                .map(|i| {
                    mac_count(Workload::MinibatchGradient {
                        batch: proto.batch_range(i, 0).len() as u64,
                        d: d as u64,
                        c: c as u64,
                    })
                })
                .collect();
            Ok((Box::new(proto), sampler(cfg, &work)?))
        }
    }
}

fn summarize(cfg: &ExperimentConfig, setup: f64, traces: &[EpochTrace]) -> RunSummary {
    let mut prev = setup;
    let durations: Vec<f64> = traces
        .iter()
        .map(|t| {
            let d = t.cumulative_seconds - prev;
            prev = t.cumulative_seconds;
            d
        })
        .collect();
    let n = durations.len().max(1) as f64;
    let mean = durations.iter().sum::<f64>() / n;
    let var = durations
        .iter()
        .map(|d| (d - mean) * (d - mean))
        .sum::<f64>()
        / n;
    let last = traces.last();
    RunSummary {
        scheme: cfg.scheme,
        epochs: traces.len(),
        setup_seconds: setup,
        total_seconds: last.map_or(setup, |t| t.cumulative_seconds),
        mean_epoch_seconds: mean,
        epoch_seconds_variance: var,
        final_train_loss: last.map_or(f64::NAN, |t| t.train_loss),
        final_test_accuracy: last.map_or(0.0, |t| t.test_accuracy),
        best_test_accuracy: traces.iter().map(|t| t.test_accuracy).fold(0.0, f64::max),
        time_to_target: cfg
            .targets
            .iter()
            .map(|&target| TargetTime {
                target,
                seconds: time_to_accuracy(traces, target),
            })
            .collect(),
    }
}

/// Runs setup and `cfg.epochs` epochs on already prepared data.
pub fn run_with_data(cfg: &ExperimentConfig, data: &DataSplit) -> Result<RunArtifact> {
    cfg.validate()?;
    let fx = cfg.fx()?;
    let parts = partition_noniid(&data.train, cfg.devices)?;
    let mut model = ModelState::new(
        data.features(),
        data.classes(),
        fx,
        cfg.schedule.clone(),
        cfg.lambda,
    );
    let (mut proto, mut lat) = build_protocol(cfg, &parts, &model)?;
    let eval = LossEvaluator::from_partitions(&parts);
    let hash = cfg.hash();
    let setup = proto.setup_seconds();
    let mut clock = setup;
    let mut traces = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let epoch = model.epoch();
        let out = proto.epoch(&model, &mut lat)?;
        model.apply_gradient(&out.gradient, out.samples)?;
        clock += out.seconds;
        let theta = model.theta();
        traces.push(EpochTrace {
            epoch,
            cumulative_seconds: clock,
            train_loss: eval.loss(&theta, cfg.lambda),
            test_accuracy: accuracy(&data.test, &theta),
            contributors: out.contributors,
            scheme: cfg.scheme,
            config_hash: hash.clone(),
        });
    }
    let summary = summarize(cfg, setup, &traces);
    Ok(RunArtifact {
        config_hash: hash,
        config: cfg.clone(),
        seeds: cfg.seeds,
        traces,
        summary,
    })
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunArtifact> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    run_with_data(cfg, &data)
}

pub struct SweepRun {
    pub value: String,
    pub result: Result<RunArtifact>,
}

/// One run per value of the dotted `key`. Runs with the same data
/// settings share one prepared dataset; failures are recorded and the
/// sweep continues.
pub fn sweep(base: &ExperimentConfig, key: &str, values: &[String]) -> Vec<SweepRun> {
    let mut loaded: HashMap<String, DataSplit> = HashMap::new();
    values
        .iter()
        .map(|v| {
            let result = (|| -> Result<RunArtifact> {
                let cfg = base.with_overrides(&[(key.to_string(), v.clone())])?;
                let dk = data_cache_key(&cfg);
                if !loaded.contains_key(&dk) {
                    let split = load_data(&cfg)?;
                    loaded.insert(dk.clone(), split);
                }
                run_with_data(&cfg, &loaded[&dk])
            })();
            SweepRun {
                value: v.clone(),
                result,
            }
        })
        .collect()
}
