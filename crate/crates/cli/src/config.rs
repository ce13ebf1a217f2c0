//! Pipeline configuration file and its defaults.

use std::path::{Path, PathBuf};

use analog_portfolio::autoencoder::EpConfig;
use analog_portfolio::SolverConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ep,
    Bp,
    Svd,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Ep => "ep",
            Method::Bp => "bp",
            Method::Svd => "svd",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BpConfig {
    pub eta: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for BpConfig {
    fn default() -> Self {
        Self {
            eta: 1e-3,
            epochs: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Defaults to the smallest expected return.
    pub r_min: Option<f64>,
    /// Defaults to the largest expected return.
    pub r_max: Option<f64>,
    pub steps: usize,
    pub warm_start: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            r_min: None,
            r_max: None,
            steps: 21,
            warm_start: true,
        }
    }
}

/// Shape of the synthetic factor market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n: usize,
    pub samples: usize,
    /// Standard deviation of the Gaussian loading entries.
    pub loading_std: f64,
    /// One entry per latent factor; the latent covariance is `diag(latent_std²)`.
    pub latent_std: Vec<f64>,
    pub noise_std: f64,
    /// Per-asset drift is drawn uniformly from `[drift_low, drift_high]`.
    pub drift_low: f64,
    pub drift_high: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 100,
            samples: 50,
            loading_std: 0.3,
            latent_std: vec![1.0, 0.3, 0.25, 0.2, 0.15, 0.12, 0.1, 0.08, 0.06, 0.05],
            noise_std: 0.1,
            drift_low: 0.0,
            drift_high: 0.0,
            seed: 0,
        }
    }
}

/// Everything a run needs. Command-line flags override file values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub covariance: Option<PathBuf>,
    pub expected_returns: Option<PathBuf>,
    pub method: Method,
    pub rank: usize,
    /// Target return for `solve`.
    pub target: Option<f64>,
    pub solver: SolverConfig,
    pub ep: EpConfig,
    pub bp: BpConfig,
    pub sweep: SweepConfig,
    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: None,
            output_dir: None,
            covariance: None,
            expected_returns: None,
            method: Method::Svd,
            rank: 10,
            target: None,
            solver: SolverConfig::default(),
            ep: EpConfig::default(),
            bp: BpConfig::default(),
            sweep: SweepConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::usage("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage("config", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// One seed for every stage.
    pub fn set_seed(&mut self, seed: u64) {
        self.solver.seed = seed;
        self.ep.seed = seed;
        self.bp.seed = seed;
        self.synth.seed = seed;
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.rank == 0 {
            return Err(CliError::usage("config", "rank must be >= 1"));
        }
        if self.method == Method::Ep {
            self.ep
                .validate()
                .map_err(|e| CliError::usage("config", e.to_string()))?;
        }
        if self.method == Method::Bp && !(self.bp.eta >= 0.0) {
            return Err(CliError::usage("config", "bp.eta must be >= 0"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = PipelineConfig::from_toml(
            "method = \"ep\"\nrank = 3\n[ep]\neta = 0.02\n[solver]\nT = 50.0\ntotal_time = 60.0\n",
        )
        .unwrap();
        assert_eq!(cfg.method, Method::Ep);
        assert_eq!(cfg.rank, 3);
        assert_eq!(cfg.ep.eta, 0.02);
        assert_eq!(cfg.ep.beta, EpConfig::default().beta);
        assert_eq!(cfg.solver.period, 50.0);
        assert_eq!(cfg.sweep.steps, 21);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = PipelineConfig::from_toml("rnak = 3\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = PipelineConfig::default();
        cfg.set_seed(11);
        cfg.sweep.r_min = Some(0.1);
        let back = PipelineConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }
}
