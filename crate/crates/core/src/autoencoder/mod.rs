//! Linear autoencoder built from two continuous Hopfield networks and trained
//! with equilibrium propagation (EP).
//!
//! Each network relaxes under `dx_i/dt = -x_i + Σ_j J_ij g(x_j) + force_i`
//! with the clipped-linear activation `g`. Input units (including one bias
//! unit fixed at 1) are clamped. The encoder maps a return vector to latent
//! factors on its output units; the decoder, with those latents clamped as
//! its inputs, reconstructs the return vector.
//!
//! Training per sample:
//!
//! 1. encoder free phase → latents `s`
//! 2. decoder free phase with `s` clamped → reconstruction `x̂`
//! 3. decoder phases at `±β` nudging outputs toward the sample → decoder update
//! 4. the decoder phases also give `∂C/∂s`, applied as a constant external
//!    force on the encoder outputs during its own `±β` phases → encoder update
//!
//! [`backprop`] holds the gradient-descent reference trainer and [`extract`]
//! turns a trained network into a factor model.

pub mod backprop;
pub mod extract;
pub mod learning;
pub mod network;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use backprop::{backprop_reference_train, reconstruction_gradients, reconstruction_loss, BpResult};
pub use extract::{
    decoder_matrix, extract_factor_model, latent_covariance, lowrank_from_autoencoder,
    pseudo_inverse_encoder, clip_audit, ClipAudit, SteadyStateMap, DEFAULT_MAX_HORIZON,
};
pub use learning::{
    ep_sample_update, encoder_output_gradient, ep_weight_update, train_epoch, Checkpoint, EpTrainer,
    EpochRecord, SampleUpdate, TrainTrace,
};
pub use network::{clamped_phase, free_phase, EnergyNetwork, EpNetwork, Nudge, Role};

/// Equilibrium-propagation hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpConfig {
    /// Clamping factor used as `±beta`.
    pub beta: f64,
    /// Learning rate.
    pub eta: f64,
    /// Activation clip bound.
    pub clip: f64,
    pub relax_dt: f64,
    pub relax_steps: usize,
    /// Relaxation stops once `‖Δx‖∞` per step falls below this.
    pub relax_tol: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for EpConfig {
    fn default() -> Self {
        Self {
            beta: 1e-2,
            eta: 1e-2,
            clip: 10.0,
            relax_dt: 0.05,
            relax_steps: 2000,
            relax_tol: 1e-10,
            epochs: 100,
            seed: 0,
        }
    }
}

impl EpConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be > 0, got {v}")))
            }
        };
        positive(self.beta, "beta")?;
        positive(self.clip, "clip")?;
        positive(self.relax_dt, "relax_dt")?;
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(Error::Config(format!("eta must be >= 0, got {}", self.eta)));
        }
        if self.relax_steps == 0 {
            return Err(Error::Config("relax_steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// `x` inside `[-c, c]`, `c · sgn(x)` outside.
pub fn clipped_linear(x: f64, c: f64) -> f64 {
    x.clamp(-c, c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_branches() {
        assert_eq!(clipped_linear(0.5, 1.0), 0.5);
        assert_eq!(clipped_linear(3.0, 1.0), 1.0);
        assert_eq!(clipped_linear(-3.0, 1.0), -1.0);
        for k in -40..=40 {
            let x = k as f64 * 0.1;
            assert_eq!(clipped_linear(-x, 2.0), -clipped_linear(x, 2.0));
        }
    }

    #[test]
    fn config_validation() {
        EpConfig::default().validate().unwrap();
        let bad = EpConfig {
            beta: 0.0,
            ..EpConfig::default()
        };
        assert!(bad.validate().is_err());
        let frozen = EpConfig {
            eta: 0.0,
            ..EpConfig::default()
        };
        frozen.validate().unwrap();
    }
}
