use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use codedfl::harness::{
    self, data_cache_key, load_data, parse_override, read_trace, time_to_accuracy, write_artifact,
    ConfigError, ExperimentConfig,
};
use codedfl::Error;

#[derive(Parser)]
#[command(
    name = "codedfl",
    version,
    about = "Straggler-resilient federated learning simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its trace.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory; defaults to runs/<config hash>.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one experiment per value of a config key.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Dotted config key, e.g. padded.alpha.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
        #[arg(long, default_value = "runs/sweep")]
        out: PathBuf,
    },
    /// Prepare and cache the (embedded) dataset.
    EmbedCache {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Tabulate run directories.
    Report {
        dirs: Vec<PathBuf>,
        /// Accuracy targets; defaults to each run's configured targets.
        #[arg(long = "target")]
        targets: Vec<f64>,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted override, e.g. --set latency.link.p=0.2 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    devices: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    alpha: Option<usize>,
    /// Group count for the selected coded scheme.
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long)]
    threshold: Option<usize>,
    #[arg(long)]
    collusion: Option<usize>,
    #[arg(long)]
    minibatch_fraction: Option<f64>,
    #[arg(long)]
    drop_count: Option<usize>,
    /// synthetic, mnist or fashion-mnist.
    #[arg(long)]
    source: Option<String>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    train_limit: Option<usize>,
    #[arg(long)]
    test_limit: Option<usize>,
    /// Random Fourier features; 0 disables the embedding.
    #[arg(long)]
    features: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    seed_data: Option<u64>,
    #[arg(long)]
    seed_protocol: Option<u64>,
    #[arg(long)]
    seed_latency: Option<u64>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn overrides(&self) -> Result<Vec<(String, String)>, ConfigError> {
        let mut out = self
            .sets
            .iter()
            .map(|s| parse_override(s))
            .collect::<Result<Vec<_>, _>>()?;
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        };
        push("scheme", self.scheme.clone());
        push("epochs", opt(self.epochs));
        push("devices", opt(self.devices));
        push("lambda", self.lambda.map(toml_float));
        push("padded.alpha", opt(self.alpha));
        push("padded.groups", opt(self.groups));
        push("secagg.groups", opt(self.groups));
        push("secagg.threshold", opt(self.threshold));
        push("secagg.collusion", opt(self.collusion));
        push(
            "conventional.minibatch_fraction",
            self.minibatch_fraction.map(toml_float),
        );
        push("conventional.drop_count", opt(self.drop_count));
        push("data.source", self.source.clone());
        push("data.dir", self.data_dir.as_ref().map(|p| toml_str(p)));
        push("data.train_limit", opt(self.train_limit));
        push("data.test_limit", opt(self.test_limit));
        push("embedding.features", opt(self.features));
        push("embedding.gamma", self.gamma.map(toml_float));
        push("seeds.data", opt(self.seed_data));
        push("seeds.protocol", opt(self.seed_protocol));
        push("seeds.latency", opt(self.seed_latency));
        push("cache_dir", self.cache_dir.as_ref().map(|p| toml_str(p)));
        Ok(out)
    }

    fn load(&self) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::load(self.config.as_deref(), &self.overrides()?)
    }
}

fn opt<T: ToString>(v: Option<T>) -> Option<String> {
    v.map(|x| x.to_string())
}

/// Float literal that TOML will not read back as an integer.
fn toml_float(v: f64) -> String {
    let s = format!("{v:?}");
    if s.contains(['.', 'e', 'E', 'n', 'i']) {
        s
    } else {
        format!("{s}.0")
    }
}

fn toml_str(p: &Path) -> String {
    toml::Value::String(p.display().to_string()).to_string()
}

fn print_run(label: &str, art: &harness::RunArtifact) {
    let s = &art.summary;
    println!(
        "{label}: scheme={} hash={} epochs={} total_s={:.3} final_acc={:.4} final_loss={:.6}",
        s.scheme,
        art.config_hash,
        s.epochs,
        s.total_seconds,
        s.final_test_accuracy,
        s.final_train_loss
    );
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { cfg, out } => {
            let cfg = cfg.load()?;
            let art = harness::run(&cfg)?;
            let dir = out.unwrap_or_else(|| PathBuf::from("runs").join(&art.config_hash));
            write_artifact(&dir, &art)?;
            print_run(&dir.display().to_string(), &art);
        }
        Command::Sweep {
            cfg,
            axis,
            values,
            out,
        } => {
            let base = cfg.load()?;
            let mut failures = 0;
            for run in harness::sweep(&base, &axis, &values) {
                let label = format!("{axis}={}", run.value);
                match run.result {
                    Ok(art) => {
                        write_artifact(&out.join(&label), &art)?;
                        print_run(&label, &art);
                    }
                    Err(e) => {
                        failures += 1;
                        eprintln!("{}", error_json(&e));
                    }
                }
            }
            if failures > 0 {
                return Err(ConfigError::new(
                    axis,
                    format!("{failures} of {} runs failed", values.len()),
                )
                .into());
            }
        }
        Command::EmbedCache { cfg } => {
            let cfg = cfg.load()?;
            let dir = cfg
                .cache_dir
                .clone()
                .ok_or_else(|| ConfigError::new("cache_dir", "required for embed-cache"))?;
            let split = load_data(&cfg)?;
            println!(
                "{} train={} test={} features={} classes={}",
                dir.join(format!("{}.bin", data_cache_key(&cfg))).display(),
                split.train.m,
                split.test.m,
                split.features(),
                split.classes()
            );
        }
        Command::Report { dirs, targets } => {
            for dir in dirs {
                let art = read_trace(&dir)?;
                print_run(&dir.display().to_string(), &art);
                let wanted = if targets.is_empty() {
                    art.config.targets.clone()
                } else {
                    targets.clone()
                };
                for t in wanted {
                    match time_to_accuracy(&art.traces, t) {
                        Some(s) => println!("  acc>={t}: {s:.3} s"),
                        None => println!("  acc>={t}: not reached"),
                    }
                }
            }
        }
    }
    Ok(())
}

fn error_json(e: &Error) -> String {
    let field = match e {
        Error::Config(c) => c.field.clone(),
        _ => String::new(),
    };
    let message = match e {
        Error::Config(c) => c.message.clone(),
        other => other.to_string(),
    };
    serde_json::json!({ "error": { "kind": e.kind(), "field": field, "message": message } })
        .to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
