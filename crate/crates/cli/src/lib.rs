//! Command-line pipeline around the `analog_portfolio` library: synthetic
//! data, covariance and factor estimation, single portfolio solves and
//! frontier sweeps. Every run writes a `run_manifest.json` with the effective
//! configuration, stage timings and SHA-256 digests of its outputs.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{Method, PipelineConfig};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "analog-portfolio", version, about = "Hopfield-network portfolio pipeline")]
pub struct Cli {
    /// TOML configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Returns CSV (header of tickers, one row per sample).
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Seed for every stochastic stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw returns from a random factor model.
    Synth {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        noise_std: Option<f64>,
    },
    /// Sample covariance of demeaned returns.
    Covariance,
    /// Low-rank factor model by EP, backprop or truncated eigendecomposition.
    Factor {
        #[arg(long, value_enum)]
        method: Option<Method>,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// One Hopfield solve at a target return.
    Solve {
        #[arg(long)]
        covariance: Option<PathBuf>,
        #[arg(long)]
        expected_returns: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        target: Option<f64>,
    },
    /// Sweep target returns and trace the efficient frontier.
    Frontier {
        #[arg(long)]
        covariance: Option<PathBuf>,
        #[arg(long)]
        expected_returns: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, allow_hyphen_values = true)]
        r_min: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        r_max: Option<f64>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Covariance => "covariance",
            Command::Factor { .. } => "factor",
            Command::Solve { .. } => "solve",
            Command::Frontier { .. } => "frontier",
        }
    }
}

/// Merges the config file with flags.
pub fn resolve_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(p) = &cli.input {
        cfg.input = Some(p.clone());
    }
    if let Some(p) = &cli.output_dir {
        cfg.output_dir = Some(p.clone());
    }
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    match &cli.command {
        Command::Synth {
            n,
            samples,
            noise_std,
        } => {
            if let Some(v) = n {
                cfg.synth.n = *v;
            }
            if let Some(v) = samples {
                cfg.synth.samples = *v;
            }
            if let Some(v) = noise_std {
                cfg.synth.noise_std = *v;
            }
        }
        Command::Covariance => {}
        Command::Factor {
            method,
            rank,
            epochs,
        } => {
            if let Some(v) = method {
                cfg.method = *v;
            }
            if let Some(v) = rank {
                cfg.rank = *v;
            }
            if let Some(v) = epochs {
                cfg.ep.epochs = *v;
                cfg.bp.epochs = *v;
            }
        }
        Command::Solve {
            covariance,
            expected_returns,
            target,
        } => {
            if covariance.is_some() {
                cfg.covariance = covariance.clone();
            }
            if expected_returns.is_some() {
                cfg.expected_returns = expected_returns.clone();
            }
            if target.is_some() {
                cfg.target = *target;
            }
        }
        Command::Frontier {
            covariance,
            expected_returns,
            steps,
            r_min,
            r_max,
        } => {
            if covariance.is_some() {
                cfg.covariance = covariance.clone();
            }
            if expected_returns.is_some() {
                cfg.expected_returns = expected_returns.clone();
            }
            if let Some(v) = steps {
                cfg.sweep.steps = *v;
            }
            if r_min.is_some() {
                cfg.sweep.r_min = *r_min;
            }
            if r_max.is_some() {
                cfg.sweep.r_max = *r_max;
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one subcommand to completion, manifest included.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve_config(cli)?;
    let dir = cfg
        .output_dir
        .clone()
        .ok_or_else(|| CliError::usage("output", "--output-dir is required"))?;
    let mut out = output::OutputDir::acquire(&dir)?;
    let name = cli.command.name();
    log::info!("{name}: writing to {}", dir.display());
    let result = match cli.command {
        Command::Synth { .. } => commands::synth(&cfg, &mut out),
        Command::Covariance => commands::covariance(&cfg, &mut out),
        Command::Factor { .. } => commands::factor(&cfg, &mut out),
        Command::Solve { .. } => commands::solve(&cfg, &mut out),
        Command::Frontier { .. } => commands::frontier(&cfg, &mut out),
    };
    // A frontier with too many failed points still leaves its files behind.
    if result.is_ok() || !out.digests().is_empty() {
        out.finish(name, &cfg)?;
    }
    result
}
