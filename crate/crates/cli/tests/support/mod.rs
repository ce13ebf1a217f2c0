#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use analog_portfolio::table::read_labeled_rows;
use nalgebra::DMatrix;

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_analog-portfolio"));
    cmd.env("RUST_LOG", "warn");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

pub fn read_matrix(path: &Path) -> DMatrix<f64> {
    read_labeled_rows(fs::File::open(path).unwrap()).unwrap().1
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Two-asset market used throughout: μ = [0.1, 0.6].
pub fn two_asset_files(dir: &Path) -> (PathBuf, PathBuf) {
    let cov = write(dir, "cov.csv", "A,B\n0.2,-0.1\n-0.1,0.4\n");
    let mu = write(dir, "mu.csv", "A,B\n0.1,0.6\n");
    (cov, mu)
}

/// Penalty weights large enough for the two-asset tolerances.
pub fn stiff_config(dir: &Path) -> PathBuf {
    write(
        dir,
        "stiff.toml",
        "[solver]\ndt = 0.001\nlambda1 = 1000.0\nlambda2 = 1000.0\n",
    )
}
