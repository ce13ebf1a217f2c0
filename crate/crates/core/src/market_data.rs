//! Asset-return samples and the moment estimates derived from them.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::table;

/// Absolute symmetry tolerance for covariance matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Relative PSD tolerance: `λ_min ≥ -PSD_TOL · λ_max`.
pub const PSD_TOL: f64 = 1e-8;

/// How the sample mean has been handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Centering {
    /// Raw returns; row means carry the expected-return signal.
    Raw,
    /// Each row had its sample mean subtracted.
    Demeaned,
    /// Not modified, but declared to come from a zero-mean distribution.
    AssumedZeroMean,
}

/// `n × N` matrix of returns: one row per asset, one column per time sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsMatrix {
    values: DMatrix<f64>,
    tickers: Vec<String>,
    centering: Centering,
}

impl ReturnsMatrix {
    pub fn new(values: DMatrix<f64>, tickers: Vec<String>) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(Error::Contract("returns matrix needs at least one asset".into()));
        }
        if values.ncols() == 0 {
            return Err(Error::NoSamples);
        }
        if tickers.len() != values.nrows() {
            return Err(Error::Dimension(format!(
                "{} tickers for {} assets",
                tickers.len(),
                values.nrows()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            let (i, j) = (k % values.nrows(), k / values.nrows());
            return Err(Error::Contract(format!(
                "non-finite return for asset {i} at sample {j}"
            )));
        }
        Ok(Self {
            values,
            tickers,
            centering: Centering::Raw,
        })
    }

    /// Wraps a matrix with generated tickers `A1..An`.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let n = values.nrows();
        Self::new(values, table::default_labels(n))
    }

    /// Declares the samples zero-mean in distribution, so the covariance
    /// estimator may use them without subtracting the sample mean.
    pub fn assume_zero_mean(mut self) -> Self {
        self.centering = Centering::AssumedZeroMean;
        self
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn centering(&self) -> Centering {
        self.centering
    }

    pub fn is_demeaned(&self) -> bool {
        self.centering == Centering::Demeaned
    }

    pub fn n_assets(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.values.ncols()
    }
}

/// Per-asset expected return.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedReturns {
    mu: DVector<f64>,
}

impl ExpectedReturns {
    pub fn new(mu: DVector<f64>) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::Contract("expected returns must be non-empty".into()));
        }
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("expected returns must be finite".into()));
        }
        Ok(Self { mu })
    }

    pub fn from_slice(mu: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(mu))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.mu.min()
    }

    pub fn max(&self) -> f64 {
        self.mu.max()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Sample,
    LowrankSvd,
    LowrankEp,
    LowrankBp,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Provenance::Sample => "sample",
            Provenance::LowrankSvd => "lowrank-svd",
            Provenance::LowrankEp => "lowrank-ep",
            Provenance::LowrankBp => "lowrank-bp",
        })
    }
}

/// Symmetric positive semidefinite `n × n` covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    matrix: DMatrix<f64>,
    provenance: Provenance,
}

impl CovarianceEstimate {
    /// Validates symmetry (`≤ 1e-12`) and PSD (`λ_min ≥ -1e-8 λ_max`).
    pub fn new(matrix: DMatrix<f64>, provenance: Provenance) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "covariance must be square and non-empty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("covariance has non-finite entries".into()));
        }
        let asym = linalg::max_asymmetry(&matrix);
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        linalg::check_psd(&matrix, PSD_TOL)?;
        Ok(Self { matrix, provenance })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }
}

/// Parses returns CSV: a header of tickers, then one line per time sample.
pub fn load_returns<R: Read>(source: R) -> Result<ReturnsMatrix> {
    let (tickers, samples) = table::read_labeled_rows(source)?;
    if samples.nrows() == 0 {
        return Err(Error::NoSamples);
    }
    ReturnsMatrix::new(samples.transpose(), tickers)
}

/// Writes returns in the format read by [`load_returns`].
pub fn save_returns<W: Write>(returns: &ReturnsMatrix, sink: W) -> Result<()> {
    table::write_labeled_rows(sink, &returns.tickers, &returns.values.transpose())
}

/// Subtracts each asset's sample mean.
pub fn demean(returns: &ReturnsMatrix) -> ReturnsMatrix {
    let mut values = returns.values.clone();
    let n_samples = values.ncols() as f64;
    for mut row in values.row_iter_mut() {
        let mean = row.sum() / n_samples;
        row.add_scalar_mut(-mean);
    }
    ReturnsMatrix {
        values,
        tickers: returns.tickers.clone(),
        centering: Centering::Demeaned,
    }
}

/// Second moment `(1/N) X X^T` of zero-mean samples.
pub fn sample_covariance(returns: &ReturnsMatrix) -> Result<CovarianceEstimate> {
    if returns.centering == Centering::Raw {
        return Err(Error::Contract(
            "sample covariance requires demeaned (or declared zero-mean) returns".into(),
        ));
    }
    let x = &returns.values;
    let n_samples = x.ncols() as f64;
    let mut s = (x * x.transpose()) / n_samples;
    mirror_upper(&mut s);
    CovarianceEstimate::new(s, Provenance::Sample)
}

/// Copies the upper triangle onto the lower so the result is exactly symmetric.
pub(crate) fn mirror_upper(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            m[(j, i)] = m[(i, j)];
        }
    }
}

/// Row-wise sample means of raw returns.
pub fn mean_returns(returns: &ReturnsMatrix) -> Result<ExpectedReturns> {
    if returns.centering != Centering::Raw {
        return Err(Error::Contract(
            "mean returns must be estimated from raw (not demeaned) returns".into(),
        ));
    }
    let n_samples = returns.n_samples() as f64;
    let mu = DVector::from_iterator(
        returns.n_assets(),
        returns.values.row_iter().map(|r| r.sum() / n_samples),
    );
    ExpectedReturns::new(mu)
}

/// Draws `n_samples` columns of `x = A s + e`.
///
/// `s ~ N(0, latent_cov)` and `e_i ~ N(0, noise_std_i²)` independently.
/// Deterministic for a fixed seed.
pub fn generate_synthetic_returns(
    loadings: &DMatrix<f64>,
    latent_cov: &DMatrix<f64>,
    noise_std: &DVector<f64>,
    n_samples: usize,
    seed: u64,
) -> Result<ReturnsMatrix> {
    let r = loadings.ncols();
    if latent_cov.nrows() != r || latent_cov.ncols() != r {
        return Err(Error::Dimension(format!(
            "latent covariance is {}x{}, loadings have {r} columns",
            latent_cov.nrows(),
            latent_cov.ncols()
        )));
    }
    let asym = linalg::max_asymmetry(latent_cov);
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    let factor = psd_square_root(latent_cov)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut latents = DMatrix::zeros(r, n_samples);
    for k in 0..n_samples {
        let z = DVector::from_fn(r, |_, _| StandardNormal.sample(&mut rng));
        latents.set_column(k, &(&factor * z));
    }
    // Noise uses an independent stream so the latent draws do not depend on n.
    let noise_seed = seed ^ 0x9e37_79b9_7f4a_7c15;
    generate_from_latents(loadings, &latents, noise_std, noise_seed)
}

/// `x = A s + e` for caller-supplied latent columns.
pub fn generate_from_latents(
    loadings: &DMatrix<f64>,
    latents: &DMatrix<f64>,
    noise_std: &DVector<f64>,
    seed: u64,
) -> Result<ReturnsMatrix> {
    let n = loadings.nrows();
    if latents.nrows() != loadings.ncols() {
        return Err(Error::Dimension(format!(
            "latents have {} rows, loadings have {} columns",
            latents.nrows(),
            loadings.ncols()
        )));
    }
    if noise_std.len() != n {
        return Err(Error::Dimension(format!(
            "{} noise levels for {n} assets",
            noise_std.len()
        )));
    }
    if noise_std.iter().any(|&s| !(s >= 0.0) || !s.is_finite()) {
        return Err(Error::Contract("noise standard deviations must be finite and >= 0".into()));
    }
    let mut values = loadings * latents;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..values.ncols() {
        for i in 0..n {
            let e: f64 = StandardNormal.sample(&mut rng);
            values[(i, k)] += noise_std[i] * e;
        }
    }
    ReturnsMatrix::from_matrix(values)
}

/// `L` with `L L^T = m` for symmetric PSD `m`.
fn psd_square_root(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let r = m.nrows();
    if r == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let (values, vectors) = linalg::sorted_symmetric_eigen(m)?;
    let hi = values[0].max(0.0);
    let lo = values[r - 1];
    if lo < -PSD_TOL * hi.max(f64::MIN_POSITIVE) && lo < -1e-14 {
        return Err(Error::NotPsd {
            min_eigenvalue: lo,
            max_eigenvalue: hi,
        });
    }
    let mut root = vectors;
    for (k, mut col) in root.column_iter_mut().enumerate() {
        col *= values[k].max(0.0).sqrt();
    }
    Ok(root)
}
