mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use genie_core::augment::Method;

use crate::commands::CliError;
use crate::config::{ConfigError, RunConfig};

/// Hard-negative augmentation experiments on synthetic few-shot tasks.
#[derive(Parser, Debug)]
#[command(name = "genie", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML run config; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long)]
    threads: Option<usize>,
    /// Denoiser checkpoint (default `<out>/denoiser.ckpt`).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the class-conditional denoiser and write a checkpoint.
    TrainDiffusion {
        #[command(flatten)]
        common: Common,
        /// Training steps.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Generate samples with a trained denoiser.
    Generate {
        #[command(flatten)]
        common: Common,
        /// genie, img2img or condsample
        #[arg(long, value_parser = parse_method)]
        method: Option<Method>,
        /// Noise ratio in (0, 1).
        #[arg(long)]
        r: Option<f64>,
        /// Guidance weight.
        #[arg(long)]
        w: Option<f64>,
        /// Samples per target class.
        #[arg(long)]
        count: Option<usize>,
        /// Comma-separated target classes (default: all).
        #[arg(long, value_delimiter = ',')]
        classes: Option<Vec<usize>>,
        /// Source class for genie (default: a random other class per sample).
        #[arg(long)]
        source_class: Option<usize>,
    },
    /// Score a samples file with the oracle.
    Consistency {
        #[command(flatten)]
        common: Common,
        /// Samples file (default `<out>/samples.jsonl`).
        #[arg(long)]
        samples: Option<PathBuf>,
    },
    /// Few-shot episodic benchmark over the configured specs.
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Number of few-shot episodes
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Long-tail experiment: real-only baseline vs augmented Few classes.
    Longtail {
        #[command(flatten)]
        common: Common,
    },
    /// Benchmark accuracy and label consistency across noise ratios.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated noise ratios.
        #[arg(long, value_delimiter = ',')]
        rs: Option<Vec<f64>>,
        /// Number of few-shot episodes
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Oracle margins and 2-D projection of real vs generated samples.
    Boundary {
        #[command(flatten)]
        common: Common,
        /// Noise ratio for the genie group
        #[arg(long)]
        r: Option<f64>,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned()))
        .map_err(|_| format!("unknown method {s:?} (expected genie, img2img, condsample, ...)"))
}

fn build_config(
    common: &Common,
    tweak: impl FnOnce(&mut RunConfig),
) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(threads) = common.threads {
        cfg.threads = threads;
    }
    if let Some(ckpt) = &common.checkpoint {
        cfg.checkpoint = Some(ckpt.clone());
    }
    tweak(&mut cfg);
    cfg.resolve()
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.command {
        Command::TrainDiffusion { common, steps } => build_config(common, |c| {
            if let Some(s) = *steps {
                c.train.steps = s;
            }
        })?,
        Command::Generate {
            common,
            method,
            r,
            w,
            count,
            classes,
            source_class,
        } => build_config(common, |c| {
            let g = &mut c.generate;
            g.method = method.unwrap_or(g.method);
            g.r = r.unwrap_or(g.r);
            g.w = w.unwrap_or(g.w);
            g.per_class_count = count.unwrap_or(g.per_class_count);
            if let Some(cl) = classes {
                g.classes = cl.clone();
            }
            if source_class.is_some() {
                g.source_class = *source_class;
            }
        })?,
        Command::Benchmark { common, episodes } => build_config(common, |c| {
            c.benchmark.episodes = episodes.unwrap_or(c.benchmark.episodes);
        })?,
        Command::Sweep {
            common,
            rs,
            episodes,
        } => build_config(common, |c| {
            if let Some(rs) = rs {
                c.sweep.rs = rs.clone();
            }
            c.benchmark.episodes = episodes.unwrap_or(c.benchmark.episodes);
        })?,
        Command::Boundary { common, r } => {
            build_config(common, |c| c.boundary.r = r.unwrap_or(c.boundary.r))?
        }
        Command::Consistency { common, .. } | Command::Longtail { common } => {
            build_config(common, |_| {})?
        }
    };
    std::fs::create_dir_all(&cfg.out).map_err(|source| CliError::Io {
        path: cfg.out.clone(),
        source,
    })?;
    let resolved = cfg.out.join("config.toml");
    std::fs::write(&resolved, cfg.to_toml()).map_err(|source| CliError::Io {
        path: resolved,
        source,
    })?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| ConfigError::Invalid(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::TrainDiffusion { .. } => commands::train_diffusion(&cfg),
        Command::Generate { .. } => commands::generate(&cfg).map(|_| ()),
        Command::Consistency { samples, .. } => {
            let path = samples
                .clone()
                .unwrap_or_else(|| cfg.out.join("samples.jsonl"));
            commands::consistency(&cfg, &path).map(|_| ())
        }
        Command::Benchmark { .. } => commands::benchmark(&cfg),
        Command::Longtail { .. } => commands::longtail(&cfg),
        Command::Sweep { .. } => commands::sweep(&cfg),
        Command::Boundary { .. } => commands::boundary(&cfg),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
