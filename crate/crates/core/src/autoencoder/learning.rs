//! Equilibrium-propagation updates and the training loop.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{clamped_phase, EnergyNetwork, EpNetwork, Nudge};
use super::{clipped_linear, EpConfig};
use crate::error::{Error, Result};
use crate::lowrank::{matrix_of, rows_of};
use crate::table::fmt_f64;

/// `ΔJ_ij = η/(2β) (v_i⁺ v_j⁺ - v_i⁻ v_j⁻)` on every edge of `net`, zero on
/// the diagonal. `plus` and `minus` are the `+β` and `-β` fixed points.
pub fn ep_weight_update(
    net: &EnergyNetwork,
    plus: &DVector<f64>,
    minus: &DVector<f64>,
    cfg: &EpConfig,
) -> DMatrix<f64> {
    let size = net.size();
    let scale = cfg.eta / (2.0 * cfg.beta);
    let vp = plus.map(|x| clipped_linear(x, cfg.clip));
    let vm = minus.map(|x| clipped_linear(x, cfg.clip));
    let mut delta = DMatrix::zeros(size, size);
    for (i, j) in net.edges() {
        if i == j {
            continue;
        }
        let d = scale * (vp[i] * vp[j] - vm[i] * vm[j]);
        delta[(i, j)] = d;
        delta[(j, i)] = d;
    }
    delta
}

/// Estimate of `∂C/∂s` for each decoder data input from the decoder's `±β`
/// phases: `(1/2β)(∂F/∂x_i|₊ - ∂F/∂x_i|₋)` with `∂F/∂x_i = x_i - Σ_j J_ij v_j`.
pub fn encoder_output_gradient(
    decoder: &EnergyNetwork,
    plus: &DVector<f64>,
    minus: &DVector<f64>,
    cfg: &EpConfig,
) -> Vec<f64> {
    let j = decoder.couplings();
    let grad_f = |state: &DVector<f64>, i: usize| {
        let mut drive = 0.0;
        for &k in decoder.neighbors(i) {
            drive += j[(i, k)] * clipped_linear(state[k], cfg.clip);
        }
        state[i] - drive
    };
    decoder
        .data_inputs()
        .map(|i| (grad_f(plus, i) - grad_f(minus, i)) / (2.0 * cfg.beta))
        .collect()
}

/// Coupling increments for one training sample.
#[derive(Debug, Clone)]
pub struct SampleUpdate {
    pub encoder: DMatrix<f64>,
    pub decoder: DMatrix<f64>,
    /// `‖x - x̂‖²` before the update.
    pub loss: f64,
}

impl SampleUpdate {
    pub fn norm(&self) -> f64 {
        (crate::linalg::frobenius_sq(&self.encoder) + crate::linalg::frobenius_sq(&self.decoder))
            .sqrt()
    }
}

/// Runs the six relaxation phases for one sample and returns both updates.
pub fn ep_sample_update(net: &EpNetwork, x: &[f64], cfg: &EpConfig) -> Result<SampleUpdate> {
    let (enc_free, latent) = net.encode(x, cfg)?;
    let (dec_free, xhat) = net.decode(&latent, cfg)?;
    let loss = x.iter().zip(&xhat).map(|(a, b)| (a - b) * (a - b)).sum();

    let beta = cfg.beta;
    let dec_plus = clamped_phase(&net.decoder, &dec_free, &Nudge::Target { target: x, beta }, cfg)?;
    let dec_minus = clamped_phase(
        &net.decoder,
        &dec_free,
        &Nudge::Target {
            target: x,
            beta: -beta,
        },
        cfg,
    )?;
    let decoder = ep_weight_update(&net.decoder, &dec_plus, &dec_minus, cfg);

    let grad = encoder_output_gradient(&net.decoder, &dec_plus, &dec_minus, cfg);
    let enc_plus = clamped_phase(&net.encoder, &enc_free, &Nudge::Gradient { grad: &grad, beta }, cfg)?;
    let enc_minus = clamped_phase(
        &net.encoder,
        &enc_free,
        &Nudge::Gradient {
            grad: &grad,
            beta: -beta,
        },
        cfg,
    )?;
    let encoder = ep_weight_update(&net.encoder, &enc_plus, &enc_minus, cfg);
    Ok(SampleUpdate {
        encoder,
        decoder,
        loss,
    })
}

/// One epoch's summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Reconstruction loss `Σ ‖x - x̂‖²` after the epoch.
    pub loss: f64,
    /// Mean per-sample update norm during the epoch.
    pub update_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<EpochRecord>,
}

impl TrainTrace {
    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }

    /// CSV with columns `epoch, loss_ep, update_norm`.
    pub fn write_csv<W: Write>(&self, mut sink: W) -> Result<()> {
        writeln!(sink, "epoch,loss_ep,update_norm")?;
        for r in &self.records {
            writeln!(sink, "{},{},{}", r.epoch, fmt_f64(r.loss), fmt_f64(r.update_norm))?;
        }
        Ok(())
    }
}

/// One pass over the columns of `data` in a shuffled order drawn from `rng`,
/// applying both updates after every sample.
pub fn train_epoch(
    net: &mut EpNetwork,
    data: &DMatrix<f64>,
    cfg: &EpConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    cfg.validate()?;
    if data.ncols() == 0 {
        return Err(Error::NoSamples);
    }
    if data.nrows() != net.n_visible() {
        return Err(Error::Dimension(format!(
            "data has {} rows, autoencoder expects {}",
            data.nrows(),
            net.n_visible()
        )));
    }
    let mut order: Vec<usize> = (0..data.ncols()).collect();
    order.shuffle(rng);
    let mut norm_sum = 0.0;
    for &k in &order {
        let x: Vec<f64> = data.column(k).iter().copied().collect();
        let update = ep_sample_update(net, &x, cfg)?;
        norm_sum += update.norm();
        net.decoder.apply_update(&update.decoder)?;
        net.encoder.apply_update(&update.encoder)?;
    }
    let loss = net.reconstruction_loss(data, cfg)?;
    Ok((loss, norm_sum / data.ncols() as f64))
}

/// Owns a network, its configuration, RNG and loss history.
#[derive(Debug, Clone)]
pub struct EpTrainer {
    pub net: EpNetwork,
    pub cfg: EpConfig,
    rng: ChaCha8Rng,
    epoch: usize,
    pub trace: TrainTrace,
}

impl EpTrainer {
    /// Fresh `n → r → n` autoencoder initialized from `cfg.seed`.
    pub fn new(n: usize, r: usize, cfg: EpConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let net = EpNetwork::new(n, r, &mut rng)?;
        Ok(Self {
            net,
            cfg,
            rng,
            epoch: 0,
            trace: TrainTrace::default(),
        })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Trains for `epochs` more epochs. The first call also records the
    /// untrained loss as epoch 0.
    pub fn train(&mut self, data: &DMatrix<f64>, epochs: usize) -> Result<&TrainTrace> {
        if self.trace.records.is_empty() {
            let loss = self.net.reconstruction_loss(data, &self.cfg)?;
            self.trace.records.push(EpochRecord {
                epoch: 0,
                loss,
                update_norm: 0.0,
            });
        }
        for _ in 0..epochs {
            let (loss, update_norm) = train_epoch(&mut self.net, data, &self.cfg, &mut self.rng)?;
            self.epoch += 1;
            self.trace.records.push(EpochRecord {
                epoch: self.epoch,
                loss,
                update_norm,
            });
        }
        Ok(&self.trace)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            n: self.net.n_visible(),
            r: self.net.n_latent(),
            config: self.cfg.clone(),
            epoch: self.epoch,
            encoder: rows_of(self.net.encoder.couplings()),
            decoder: rows_of(self.net.decoder.couplings()),
            rng_seed: self.rng.get_seed(),
            rng_word_pos: self.rng.get_word_pos(),
            trace: self.trace.clone(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let mut trainer = Self::new(ck.n, ck.r, ck.config.clone())?;
        let enc_size = trainer.net.encoder.size();
        let dec_size = trainer.net.decoder.size();
        trainer
            .net
            .encoder
            .set_couplings(&matrix_of(&ck.encoder, enc_size, enc_size, "encoder")?)?;
        trainer
            .net
            .decoder
            .set_couplings(&matrix_of(&ck.decoder, dec_size, dec_size, "decoder")?)?;
        let mut rng = ChaCha8Rng::from_seed(ck.rng_seed);
        rng.set_word_pos(ck.rng_word_pos);
        trainer.rng = rng;
        trainer.epoch = ck.epoch;
        trainer.trace = ck.trace.clone();
        Ok(trainer)
    }
}

/// JSON training checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub n: usize,
    pub r: usize,
    pub config: EpConfig,
    pub epoch: usize,
    pub encoder: Vec<Vec<f64>>,
    pub decoder: Vec<Vec<f64>>,
    pub rng_seed: [u8; 32],
    pub rng_word_pos: u128,
    pub trace: TrainTrace,
}
