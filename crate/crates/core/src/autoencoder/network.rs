//! Hopfield networks with clamped inputs and their relaxation phases.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{clipped_linear, EpConfig};
use crate::error::{Error, Result};

/// Which half of the autoencoder a network plays; used in diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Encoder,
    Decoder,
    Standalone,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Role::Encoder => "encoder",
            Role::Decoder => "decoder",
            Role::Standalone => "network",
        })
    }
}

/// Symmetric-coupling network over a fixed edge set.
///
/// Units listed in `inputs` are clamped (the bias unit, if any, is the last
/// of them and is held at 1). All other units are free. `outputs` is the set
/// `Y` nudged in clamped phases.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyNetwork {
    couplings: DMatrix<f64>,
    neighbors: Vec<Vec<usize>>,
    inputs: Vec<usize>,
    bias: Option<usize>,
    outputs: Vec<usize>,
    free: Vec<usize>,
    role: Role,
}

impl EnergyNetwork {
    /// Input layer (plus optional bias unit) fully connected to an output
    /// layer, no lateral edges. Units are ordered inputs, bias, outputs.
    /// Couplings start uniform in `[-scale, scale]`.
    pub fn bipartite<R: Rng>(
        n_in: usize,
        n_out: usize,
        with_bias: bool,
        scale: f64,
        role: Role,
        rng: &mut R,
    ) -> Self {
        let n_clamped = n_in + usize::from(with_bias);
        let size = n_clamped + n_out;
        let mut couplings = DMatrix::zeros(size, size);
        let mut neighbors = vec![Vec::new(); size];
        for o in n_clamped..size {
            for i in 0..n_clamped {
                let w = if scale > 0.0 {
                    rng.random_range(-scale..=scale)
                } else {
                    0.0
                };
                couplings[(o, i)] = w;
                couplings[(i, o)] = w;
                neighbors[o].push(i);
                neighbors[i].push(o);
            }
        }
        Self {
            couplings,
            neighbors,
            inputs: (0..n_clamped).collect(),
            bias: with_bias.then_some(n_in),
            outputs: (n_clamped..size).collect(),
            free: (n_clamped..size).collect(),
            role,
        }
    }

    /// Every pair of units (self-couplings included) is an edge.
    pub fn dense(
        couplings: DMatrix<f64>,
        inputs: Vec<usize>,
        bias: Option<usize>,
        outputs: Vec<usize>,
    ) -> Result<Self> {
        let size = couplings.nrows();
        if !couplings.is_square() {
            return Err(Error::Dimension("coupling matrix must be square".into()));
        }
        let asym = crate::linalg::max_asymmetry(&couplings);
        if asym > 1e-12 {
            return Err(Error::NotSymmetric(asym));
        }
        if inputs.iter().chain(&outputs).any(|&u| u >= size) {
            return Err(Error::Dimension("unit index out of range".into()));
        }
        if let Some(b) = bias {
            if !inputs.contains(&b) {
                return Err(Error::Contract("bias unit must be a clamped input".into()));
            }
        }
        let free = (0..size).filter(|u| !inputs.contains(u)).collect();
        Ok(Self {
            couplings,
            neighbors: (0..size).map(|_| (0..size).collect()).collect(),
            inputs,
            bias,
            outputs,
            free,
            role: Role::Standalone,
        })
    }

    pub fn size(&self) -> usize {
        self.couplings.nrows()
    }

    pub fn couplings(&self) -> &DMatrix<f64> {
        &self.couplings
    }

    pub fn inputs(&self) -> &[usize] {
        &self.inputs
    }

    /// Clamped units other than the bias.
    pub fn data_inputs(&self) -> impl Iterator<Item = usize> + '_ {
        self.inputs.iter().copied().filter(move |&u| Some(u) != self.bias)
    }

    pub fn n_data_inputs(&self) -> usize {
        self.inputs.len() - usize::from(self.bias.is_some())
    }

    pub fn bias(&self) -> Option<usize> {
        self.bias
    }

    pub fn outputs(&self) -> &[usize] {
        &self.outputs
    }

    pub fn free_units(&self) -> &[usize] {
        &self.free
    }

    pub fn neighbors(&self, unit: usize) -> &[usize] {
        &self.neighbors[unit]
    }

    pub fn role(&self) -> Role {
        self.role
    }

    /// Iterates each undirected edge once as `(i, j)` with `i <= j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, nb)| nb.iter().filter(move |&&j| j >= i).map(move |&j| (i, j)))
    }

    /// Adds `delta` on existing edges, keeping the matrix symmetric.
    pub fn apply_update(&mut self, delta: &DMatrix<f64>) -> Result<()> {
        if delta.shape() != self.couplings.shape() {
            return Err(Error::Dimension("update shape differs from couplings".into()));
        }
        let edges: Vec<(usize, usize)> = self.edges().collect();
        for (i, j) in edges {
            let w = self.couplings[(i, j)] + delta[(i, j)];
            self.couplings[(i, j)] = w;
            self.couplings[(j, i)] = w;
        }
        Ok(())
    }

    /// Overwrites couplings on existing edges from `values`.
    pub fn set_couplings(&mut self, values: &DMatrix<f64>) -> Result<()> {
        if values.shape() != self.couplings.shape() {
            return Err(Error::Dimension("coupling shape mismatch".into()));
        }
        let edges: Vec<(usize, usize)> = self.edges().collect();
        self.couplings.fill(0.0);
        for (i, j) in edges {
            self.couplings[(i, j)] = values[(i, j)];
            self.couplings[(j, i)] = values[(i, j)];
        }
        Ok(())
    }

    /// Full state with inputs clamped, the bias at 1, free units at 0.
    pub fn clamp_inputs(&self, input: &[f64]) -> Result<DVector<f64>> {
        if input.len() != self.n_data_inputs() {
            return Err(Error::Dimension(format!(
                "{} input values for {} input units of the {}",
                input.len(),
                self.n_data_inputs(),
                self.role
            )));
        }
        let mut x = DVector::zeros(self.size());
        for (u, &val) in self.data_inputs().zip(input) {
            x[u] = val;
        }
        if let Some(b) = self.bias {
            x[b] = 1.0;
        }
        Ok(x)
    }

    /// Values of the output units.
    pub fn read_outputs(&self, state: &DVector<f64>) -> Vec<f64> {
        self.outputs.iter().map(|&u| state[u]).collect()
    }

    /// Fixed-step relaxation of the free units from `state`.
    ///
    /// Returns the number of steps applied. Stops, without applying it, at the
    /// first step with `‖Δx‖∞ < relax_tol`, or after `relax_steps`. Fails if `‖x‖∞ > 10c` persists for 100 steps.
    pub fn relax(
        &self,
        state: &mut DVector<f64>,
        nudge: &Nudge<'_>,
        cfg: &EpConfig,
        phase: &str,
    ) -> Result<usize> {
        nudge.check(self)?;
        let c = cfg.clip;
        let size = self.size();
        let mut v = vec![0.0; size];
        let mut delta = vec![0.0; self.free.len()];
        let mut out_slot = vec![usize::MAX; size];
        for (k, &u) in self.outputs.iter().enumerate() {
            out_slot[u] = k;
        }
        let blowup = 10.0 * c;
        let mut over_steps = 0;

        for step in 1..=cfg.relax_steps {
            for (vi, &xi) in v.iter_mut().zip(state.iter()) {
                *vi = clipped_linear(xi, c);
            }
            let mut largest = 0.0_f64;
            for (d, &i) in delta.iter_mut().zip(&self.free) {
                let mut force = -state[i];
                for &j in &self.neighbors[i] {
                    force += self.couplings[(i, j)] * v[j];
                }
                let k = out_slot[i];
                if k != usize::MAX {
                    force += nudge.force(k, state[i]);
                }
                *d = cfg.relax_dt * force;
                largest = largest.max(d.abs());
            }
            if largest < cfg.relax_tol {
                return Ok(step - 1);
            }
            let mut magnitude = 0.0_f64;
            for (&d, &i) in delta.iter().zip(&self.free) {
                state[i] += d;
                magnitude = magnitude.max(state[i].abs());
            }
            if !magnitude.is_finite() {
                return Err(self.instability(phase, step, magnitude));
            }
            over_steps = if magnitude > blowup { over_steps + 1 } else { 0 };
            if over_steps >= 100 {
                return Err(self.instability(phase, step, magnitude));
            }
        }
        Ok(cfg.relax_steps)
    }

    fn instability(&self, phase: &str, step: usize, magnitude: f64) -> Error {
        Error::Instability {
            phase: format!("{} {phase}", self.role),
            step,
            magnitude,
        }
    }
}

/// External force on the output units during a clamped phase.
#[derive(Debug, Clone, Copy)]
pub enum Nudge<'a> {
    None,
    /// `β (y_k - x_k)`: pull outputs toward targets.
    Target { target: &'a [f64], beta: f64 },
    /// `-β ∂C/∂x_k` with a gradient estimate held fixed.
    Gradient { grad: &'a [f64], beta: f64 },
}

impl Nudge<'_> {
    fn force(&self, k: usize, x: f64) -> f64 {
        match self {
            Nudge::None => 0.0,
            Nudge::Target { target, beta } => beta * (target[k] - x),
            Nudge::Gradient { grad, beta } => -beta * grad[k],
        }
    }

    fn check(&self, net: &EnergyNetwork) -> Result<()> {
        let len = match self {
            Nudge::None => return Ok(()),
            Nudge::Target { target, .. } => target.len(),
            Nudge::Gradient { grad, .. } => grad.len(),
        };
        if len != net.outputs.len() {
            return Err(Error::Dimension(format!(
                "nudge has {len} entries for {} output units of the {}",
                net.outputs.len(),
                net.role
            )));
        }
        Ok(())
    }
}

/// Free phase: inputs clamped, free units start at 0 and relax with no nudge.
pub fn free_phase(net: &EnergyNetwork, input: &[f64], cfg: &EpConfig) -> Result<DVector<f64>> {
    let mut state = net.clamp_inputs(input)?;
    net.relax(&mut state, &Nudge::None, cfg, "free")?;
    Ok(state)
}

/// Weakly clamped phase starting from a free-phase fixed point.
pub fn clamped_phase(
    net: &EnergyNetwork,
    free_state: &DVector<f64>,
    nudge: &Nudge<'_>,
    cfg: &EpConfig,
) -> Result<DVector<f64>> {
    if free_state.len() != net.size() {
        return Err(Error::Dimension("state size differs from network size".into()));
    }
    let mut state = free_state.clone();
    let phase = match nudge {
        Nudge::Target { beta, .. } | Nudge::Gradient { beta, .. } if *beta < 0.0 => "-beta",
        _ => "+beta",
    };
    net.relax(&mut state, nudge, cfg, phase)?;
    Ok(state)
}

/// Encoder and decoder networks of an `n → r → n` autoencoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EpNetwork {
    pub encoder: EnergyNetwork,
    pub decoder: EnergyNetwork,
}

impl EpNetwork {
    /// Both halves bipartite with a bias unit, couplings uniform in
    /// `±1/√(n+r)`.
    pub fn new<R: Rng>(n: usize, r: usize, rng: &mut R) -> Result<Self> {
        if n == 0 || r == 0 {
            return Err(Error::Config("autoencoder needs n >= 1 and r >= 1".into()));
        }
        let scale = 1.0 / ((n + r) as f64).sqrt();
        let encoder = EnergyNetwork::bipartite(n, r, true, scale, Role::Encoder, rng);
        let decoder = EnergyNetwork::bipartite(r, n, true, scale, Role::Decoder, rng);
        Ok(Self { encoder, decoder })
    }

    pub fn n_visible(&self) -> usize {
        self.encoder.n_data_inputs()
    }

    pub fn n_latent(&self) -> usize {
        self.decoder.n_data_inputs()
    }

    /// Encoder free phase; returns the full state and the latent vector.
    pub fn encode(&self, x: &[f64], cfg: &EpConfig) -> Result<(DVector<f64>, Vec<f64>)> {
        let state = free_phase(&self.encoder, x, cfg)?;
        let latent = self.encoder.read_outputs(&state);
        Ok((state, latent))
    }

    /// Decoder free phase with `latent` clamped.
    pub fn decode(&self, latent: &[f64], cfg: &EpConfig) -> Result<(DVector<f64>, Vec<f64>)> {
        let state = free_phase(&self.decoder, latent, cfg)?;
        let out = self.decoder.read_outputs(&state);
        Ok((state, out))
    }

    /// `Σ_k ‖x_k - x̂_k‖²` over the columns of `data`.
    pub fn reconstruction_loss(&self, data: &DMatrix<f64>, cfg: &EpConfig) -> Result<f64> {
        let mut loss = 0.0;
        for col in data.column_iter() {
            let x: Vec<f64> = col.iter().copied().collect();
            let (_, s) = self.encode(&x, cfg)?;
            let (_, xhat) = self.decode(&s, cfg)?;
            loss += x.iter().zip(&xhat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        Ok(loss)
    }
}
