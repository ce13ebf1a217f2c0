//! Classical low-rank factor analysis: keep the top-`r` eigenpairs of the
//! sample covariance, estimate diagonal noise from what remains.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::market_data::{mirror_upper, CovarianceEstimate, Provenance, PSD_TOL};

/// Rank-`r` truncation of a symmetric matrix and its full spectrum.
#[derive(Debug, Clone)]
pub struct LowRankApprox {
    /// `U Λ_r U^T`
    pub matrix: DMatrix<f64>,
    /// All eigenvalues, non-increasing.
    pub eigenvalues: DVector<f64>,
    /// Matching eigenvectors as columns.
    pub eigenvectors: DMatrix<f64>,
    pub rank: usize,
}

impl LowRankApprox {
    /// Retained eigenvalues with negatives zeroed.
    pub fn retained(&self) -> DVector<f64> {
        self.eigenvalues.rows(0, self.rank).map(|l| l.max(0.0))
    }

    /// Factor form: `A = U_r` (orthonormal columns), `P = diag(Λ_r)`.
    pub fn factors(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let a = self.eigenvectors.columns(0, self.rank).into_owned();
        let p = DMatrix::from_diagonal(&self.retained());
        (a, p)
    }
}

/// Keeps the `r` largest eigenpairs of symmetric `s`; negative retained
/// eigenvalues are zeroed so the result is PSD.
pub fn svd_lowrank(s: &DMatrix<f64>, r: usize) -> Result<LowRankApprox> {
    let n = s.nrows();
    if !s.is_square() {
        return Err(Error::Dimension(format!("{}x{} is not square", n, s.ncols())));
    }
    if r == 0 || r > n {
        return Err(Error::Contract(format!("rank must be in 1..={n}, got {r}")));
    }
    let asym = linalg::max_asymmetry(s);
    if asym > 1e-12 * s.amax().max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    let (eigenvalues, eigenvectors) = linalg::sorted_symmetric_eigen(s)?;
    let mut matrix = DMatrix::zeros(n, n);
    for k in 0..r {
        let lambda = eigenvalues[k].max(0.0);
        if lambda == 0.0 {
            continue;
        }
        let u = eigenvectors.column(k);
        matrix.ger(lambda, &u, &u, 1.0);
    }
    mirror_upper(&mut matrix);
    Ok(LowRankApprox {
        matrix,
        eigenvalues,
        eigenvectors,
        rank: r,
    })
}

/// `Ψ_i = max(0, S_ii - M_ii)`.
pub fn estimate_psi(s: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_same_shape(s, m)?;
    Ok(DVector::from_fn(s.nrows(), |i, _| (s[(i, i)] - m[(i, i)]).max(0.0)))
}

/// `Σ = M + diag(Ψ)`.
pub fn assemble_covariance(
    m: &DMatrix<f64>,
    psi: &DVector<f64>,
    provenance: Provenance,
) -> Result<CovarianceEstimate> {
    if !m.is_square() || psi.len() != m.nrows() {
        return Err(Error::Dimension(format!(
            "M is {}x{} but Ψ has {} entries",
            m.nrows(),
            m.ncols(),
            psi.len()
        )));
    }
    if psi.iter().any(|&p| !(p >= 0.0)) {
        return Err(Error::Contract("noise variances must be nonnegative".into()));
    }
    linalg::check_psd(m, PSD_TOL)?;
    let mut sigma = linalg::symmetrize(m);
    for i in 0..psi.len() {
        sigma[(i, i)] += psi[i];
    }
    CovarianceEstimate::new(sigma, provenance)
}

/// `‖S - M - Ψ‖_F²`.
pub fn frobenius_gap(s: &DMatrix<f64>, m: &DMatrix<f64>, psi: &DVector<f64>) -> Result<f64> {
    Ok(linalg::frobenius_sq(&residual(s, m, psi)?))
}

/// `S - M - diag(Ψ)`.
pub fn residual(s: &DMatrix<f64>, m: &DMatrix<f64>, psi: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_same_shape(s, m)?;
    if psi.len() != s.nrows() {
        return Err(Error::Dimension(format!(
            "Ψ has {} entries for a {}x{} matrix",
            psi.len(),
            s.nrows(),
            s.ncols()
        )));
    }
    let mut r = s - m;
    for i in 0..psi.len() {
        r[(i, i)] -= psi[i];
    }
    Ok(r)
}

fn check_same_shape(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() || !a.is_square() {
        return Err(Error::Dimension(format!(
            "shapes {:?} and {:?} differ or are not square",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// `Σ = A P A^T + diag(Ψ)` with rank bound `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub rank: usize,
    /// `n × r` loadings.
    pub loadings: DMatrix<f64>,
    /// `r × r` latent second moment.
    pub latent_cov: DMatrix<f64>,
    /// Diagonal noise variances.
    pub psi: DVector<f64>,
    /// `r × n` encoder, when the model came from an autoencoder.
    pub encoder: Option<DMatrix<f64>>,
}

impl FactorModel {
    pub fn new(
        loadings: DMatrix<f64>,
        latent_cov: DMatrix<f64>,
        psi: DVector<f64>,
        encoder: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let model = Self {
            rank: loadings.ncols(),
            loadings,
            latent_cov,
            psi,
            encoder,
        };
        model.check_shapes()?;
        Ok(model)
    }

    fn check_shapes(&self) -> Result<()> {
        let (n, r) = self.loadings.shape();
        if r != self.rank {
            return Err(Error::Dimension(format!("rank {} but A has {r} columns", self.rank)));
        }
        if self.latent_cov.shape() != (r, r) {
            return Err(Error::Dimension(format!(
                "P is {:?}, expected ({r}, {r})",
                self.latent_cov.shape()
            )));
        }
        if self.psi.len() != n {
            return Err(Error::Dimension(format!("Ψ has {} entries, expected {n}", self.psi.len())));
        }
        if let Some(b) = &self.encoder {
            if b.shape() != (r, n) {
                return Err(Error::Dimension(format!("B is {:?}, expected ({r}, {n})", b.shape())));
            }
        }
        Ok(())
    }

    /// `M = A P A^T`, exactly symmetric.
    pub fn low_rank(&self) -> DMatrix<f64> {
        let mut m = &self.loadings * &self.latent_cov * self.loadings.transpose();
        let sym = linalg::symmetrize(&m);
        m.copy_from(&sym);
        m
    }

    pub fn covariance(&self, provenance: Provenance) -> Result<CovarianceEstimate> {
        assemble_covariance(&self.low_rank(), &self.psi, provenance)
    }

    /// Checks `Ψ ≥ 0`, `rank(M) ≤ r` and PSD of `M + diag(Ψ)`.
    pub fn validate(&self) -> Result<()> {
        self.check_shapes()?;
        if self.psi.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::Contract("Ψ has negative entries".into()));
        }
        let m = self.low_rank();
        let sv = linalg::singular_values(&m);
        if !sv.is_empty() && sv[0] > 0.0 {
            if let Some(&excess) = sv.iter().skip(self.rank).find(|&&s| s > 1e-8 * sv[0]) {
                return Err(Error::Contract(format!(
                    "A P A^T exceeds rank {} (singular value {excess:e})",
                    self.rank
                )));
            }
        }
        let mut sigma = m;
        for i in 0..self.psi.len() {
            sigma[(i, i)] += self.psi[i];
        }
        linalg::check_psd(&sigma, PSD_TOL)
    }

    pub fn to_json(&self) -> FactorModelJson {
        FactorModelJson {
            r: self.rank,
            a: rows_of(&self.loadings),
            p: rows_of(&self.latent_cov),
            psi: self.psi.iter().copied().collect(),
            b: self.encoder.as_ref().map(rows_of),
        }
    }

    pub fn from_json(json: FactorModelJson) -> Result<Self> {
        let n = json.psi.len();
        let a = matrix_of(&json.a, n, json.r, "A")?;
        let p = matrix_of(&json.p, json.r, json.r, "P")?;
        let b = json.b.as_ref().map(|b| matrix_of(b, json.r, n, "B")).transpose()?;
        Self::new(a, p, DVector::from_vec(json.psi), b)
    }

    pub fn write_json<W: Write>(&self, sink: W) -> Result<()> {
        serde_json::to_writer_pretty(sink, &self.to_json())?;
        Ok(())
    }

    pub fn read_json<R: Read>(source: R) -> Result<Self> {
        Self::from_json(serde_json::from_reader(source)?)
    }
}

/// Serialized factor model. Matrices are row-major nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorModelJson {
    pub r: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    #[serde(rename = "Psi")]
    pub psi: Vec<f64>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
}

pub(crate) fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub(crate) fn matrix_of(rows: &[Vec<f64>], nrows: usize, ncols: usize, name: &str) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension(format!("{name} must be {nrows}x{ncols}")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}
