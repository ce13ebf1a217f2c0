//! Reading linear maps and factor models out of trained networks.

use nalgebra::{DMatrix, DVector};

use super::network::{EnergyNetwork, EpNetwork};
use super::EpConfig;
use crate::error::{Error, Result};
use crate::linalg;
use crate::lowrank::{estimate_psi, FactorModel};

/// Largest horizon tried by [`decoder_matrix`] before giving up.
pub const DEFAULT_MAX_HORIZON: f64 = 1.0e6;
const MAP_TOL: f64 = 1e-9;

/// Long-time limit of the linearized dynamics `exp((J - I)t)` with clamped
/// units held fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateMap {
    /// Full `size × size` propagator at `horizon`.
    pub map: DMatrix<f64>,
    pub horizon: f64,
    /// Block from data inputs to outputs.
    pub block: DMatrix<f64>,
    /// Output values produced by the bias unit alone (zero if none).
    pub offsets: DVector<f64>,
}

/// Evaluates `exp(K t)` where `K = J - I` with rows of clamped units zeroed,
/// doubling `t` from 1 until `t` and `t + 1` agree to 1e-9 in max norm.
pub fn decoder_matrix(net: &EnergyNetwork, max_horizon: f64) -> Result<SteadyStateMap> {
    let size = net.size();
    let mut k = net.couplings() - DMatrix::<f64>::identity(size, size);
    for &u in net.inputs() {
        k.row_mut(u).fill(0.0);
    }
    let mut t = 1.0;
    while t <= max_horizon {
        let now = linalg::expm(&k, t);
        let next = linalg::expm(&k, t + 1.0);
        if !now.iter().chain(next.iter()).all(|v| v.is_finite()) {
            break;
        }
        if (&next - &now).amax() < MAP_TOL {
            let inputs: Vec<usize> = net.data_inputs().collect();
            let outputs = net.outputs();
            let block = DMatrix::from_fn(outputs.len(), inputs.len(), |a, b| {
                next[(outputs[a], inputs[b])]
            });
            let offsets = match net.bias() {
                Some(b) => DVector::from_iterator(outputs.len(), outputs.iter().map(|&o| next[(o, b)])),
                None => DVector::zeros(outputs.len()),
            };
            return Ok(SteadyStateMap {
                map: next,
                horizon: t + 1.0,
                block,
                offsets,
            });
        }
        t *= 2.0;
    }
    Err(Error::SpectralNonConvergence {
        horizon: max_horizon,
        eigenvalues: unstable_modes(net, &k),
    })
}

/// Eigenvalues `>= 0` of the free-unit block of `J - I`.
fn unstable_modes(net: &EnergyNetwork, k: &DMatrix<f64>) -> Vec<f64> {
    let free = net.free_units();
    let block = DMatrix::from_fn(free.len(), free.len(), |a, b| k[(free[a], free[b])]);
    match linalg::sorted_symmetric_eigen(&linalg::symmetrize(&block)) {
        Ok((vals, _)) => vals.iter().copied().filter(|&v| v >= 0.0).collect(),
        Err(_) => Vec::new(),
    }
}

/// `B = (A^T A)^{-1} A^T`.
pub fn pseudo_inverse_encoder(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sv = linalg::singular_values(a);
    let largest = sv.iter().copied().fold(0.0, f64::max);
    let smallest = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if a.ncols() == 0 || a.ncols() > a.nrows() || !(smallest > 1e-10 * largest) {
        return Err(Error::RankDeficient {
            smallest: if smallest.is_finite() { smallest } else { 0.0 },
            largest,
        });
    }
    let gram = a.transpose() * a;
    let chol = gram.cholesky().ok_or(Error::RankDeficient { smallest, largest })?;
    Ok(chol.solve(&a.transpose()))
}

/// `P = S S^T / N` over the columns of `latents`.
pub fn latent_covariance(latents: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if latents.ncols() == 0 {
        return Err(Error::NoSamples);
    }
    let mut p = latents * latents.transpose() / latents.ncols() as f64;
    let sym = linalg::symmetrize(&p);
    p.copy_from(&sym);
    Ok(p)
}

/// `M = A P A^T`.
pub fn lowrank_from_autoencoder(a: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.ncols() != p.nrows() || !p.is_square() {
        return Err(Error::Dimension(format!(
            "A is {:?} but P is {:?}",
            a.shape(),
            p.shape()
        )));
    }
    let m = a * p * a.transpose();
    Ok(linalg::symmetrize(&m))
}

/// Units whose free-phase value left `[-c, c]` over a data set.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipAudit {
    pub max_abs: f64,
    /// `(network, unit)` pairs, deduplicated.
    pub clipped: Vec<(String, usize)>,
}

impl ClipAudit {
    pub fn is_clean(&self) -> bool {
        self.clipped.is_empty()
    }
}

/// Runs every column of `data` through the autoencoder and reports clipping.
pub fn clip_audit(net: &EpNetwork, data: &DMatrix<f64>, cfg: &EpConfig) -> Result<ClipAudit> {
    let mut audit = ClipAudit {
        max_abs: 0.0,
        clipped: Vec::new(),
    };
    let note = |name: &str, state: &DVector<f64>, audit: &mut ClipAudit| {
        for (u, &x) in state.iter().enumerate() {
            audit.max_abs = audit.max_abs.max(x.abs());
            if x.abs() > cfg.clip && !audit.clipped.iter().any(|(n, k)| n == name && *k == u) {
                audit.clipped.push((name.to_string(), u));
            }
        }
    };
    for col in data.column_iter() {
        let x: Vec<f64> = col.iter().copied().collect();
        let (enc, s) = net.encode(&x, cfg)?;
        let (dec, _) = net.decode(&s, cfg)?;
        note("encoder", &enc, &mut audit);
        note("decoder", &dec, &mut audit);
    }
    Ok(audit)
}

/// Factor model from a trained autoencoder.
///
/// `A` is the decoder's latent-to-output block, `B` the encoder's
/// input-to-latent block, `P` the second moment of the encoder's latents over
/// `data`, and `Ψ = max(0, diag(S - A P A^T))`.
pub fn extract_factor_model(
    net: &EpNetwork,
    data: &DMatrix<f64>,
    s: &DMatrix<f64>,
) -> Result<FactorModel> {
    let n = net.n_visible();
    if data.nrows() != n || s.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "data {:?} and S {:?} do not match n = {n}",
            data.shape(),
            s.shape()
        )));
    }
    let dec = decoder_matrix(&net.decoder, DEFAULT_MAX_HORIZON)?;
    let enc = decoder_matrix(&net.encoder, DEFAULT_MAX_HORIZON)?;
    let mut latents = &enc.block * data;
    for mut col in latents.column_iter_mut() {
        col += &enc.offsets;
    }
    let p = latent_covariance(&latents)?;
    let m = lowrank_from_autoencoder(&dec.block, &p)?;
    let psi = estimate_psi(s, &m)?;
    FactorModel::new(dec.block, p, psi, Some(enc.block))
}
