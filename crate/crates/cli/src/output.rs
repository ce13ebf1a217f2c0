//! Output directory ownership, file emission and the run manifest.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::CliError;

pub const LOCK_FILE: &str = ".analog-portfolio.lock";
pub const MANIFEST_FILE: &str = "run_manifest.json";

/// Exclusive handle on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    lock: PathBuf,
    digests: BTreeMap<String, String>,
    timings: Vec<StageTiming>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seeds: BTreeMap<&'a str, u64>,
    config: &'a PipelineConfig,
    stages: &'a [StageTiming],
    outputs: &'a BTreeMap<String, String>,
}

impl OutputDir {
    pub fn acquire(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root)
            .map_err(|e| CliError::usage("output", format!("{}: {e}", root.display())))?;
        let lock = root.join(LOCK_FILE);
        OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&lock)
            .map_err(|e| {
                CliError::usage(
                    "output",
                    format!("cannot lock {}: {e} (another run may own it)", root.display()),
                )
            })?;
        Ok(Self {
            root: root.to_path_buf(),
            lock,
            digests: BTreeMap::new(),
            timings: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes `name` from a closure that fills a byte buffer.
    pub fn emit<F>(&mut self, name: &str, fill: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> analog_portfolio::Result<()>,
    {
        let mut buf = Vec::new();
        fill(&mut buf).map_err(|e| CliError::from_core("output", e))?;
        fs::write(self.path(name), &buf)
            .map_err(|e| CliError::usage("output", format!("{name}: {e}")))?;
        self.digests.insert(name.to_string(), hex::encode(Sha256::digest(&buf)));
        log::info!("wrote {}", self.path(name).display());
        Ok(())
    }

    pub fn emit_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        self.emit(name, |buf| {
            serde_json::to_writer_pretty(&mut *buf, value)?;
            buf.push(b'\n');
            Ok(())
        })
    }

    /// Runs `f` and records its wall-clock time under `stage`.
    pub fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    pub fn digests(&self) -> &BTreeMap<String, String> {
        &self.digests
    }

    /// Writes `run_manifest.json`. It holds timings, so it is the one file
    /// that differs between otherwise identical runs.
    pub fn finish(self, command: &str, config: &PipelineConfig) -> Result<(), CliError> {
        let seeds = BTreeMap::from([
            ("solver", config.solver.seed),
            ("ep", config.ep.seed),
            ("bp", config.bp.seed),
            ("synth", config.synth.seed),
        ]);
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seeds,
            config,
            stages: &self.timings,
            outputs: &self.digests,
        };
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::numeric("output", e.to_string()))?;
        fs::write(self.path(MANIFEST_FILE), text + "\n")
            .map_err(|e| CliError::usage("output", format!("{MANIFEST_FILE}: {e}")))?;
        Ok(())
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

/// SHA-256 of a file on disk, hex encoded.
pub fn file_digest(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}
