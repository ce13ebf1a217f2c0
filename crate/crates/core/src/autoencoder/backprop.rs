//! Full-batch gradient descent on `‖X - ABX‖_F²`, used as a reference.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::learning::{EpochRecord, TrainTrace};
use crate::error::{Error, Result};
use crate::linalg::frobenius_sq;

#[derive(Debug, Clone, PartialEq)]
pub struct BpResult {
    /// Decoder `A`, `n × r`.
    pub loadings: DMatrix<f64>,
    /// Encoder `B`, `r × n`.
    pub encoder: DMatrix<f64>,
    pub trace: TrainTrace,
}

/// `‖X - ABX‖_F²`.
pub fn reconstruction_loss(x: &DMatrix<f64>, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    frobenius_sq(&(x - a * (b * x)))
}

/// Analytic gradients `(∂/∂A, ∂/∂B)` of [`reconstruction_loss`].
pub fn reconstruction_gradients(
    x: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let bx = b * x;
    let resid = x - a * &bx;
    let grad_a = -2.0 * &resid * bx.transpose();
    let grad_b = -2.0 * a.transpose() * &resid * x.transpose();
    (grad_a, grad_b)
}

/// Trains `A` and `B` from a uniform `±1/√(n+r)` start drawn from `seed`.
pub fn backprop_reference_train(
    x: &DMatrix<f64>,
    r: usize,
    epochs: usize,
    eta: f64,
    seed: u64,
) -> Result<BpResult> {
    let n = x.nrows();
    if x.ncols() == 0 {
        return Err(Error::NoSamples);
    }
    if r == 0 || n == 0 {
        return Err(Error::Config("backprop needs n >= 1 and r >= 1".into()));
    }
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(Error::Config(format!("eta must be >= 0, got {eta}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / ((n + r) as f64).sqrt();
    let mut a = DMatrix::from_fn(n, r, |_, _| rng.random_range(-scale..=scale));
    let mut b = DMatrix::from_fn(r, n, |_, _| rng.random_range(-scale..=scale));

    let initial = reconstruction_loss(x, &a, &b);
    let mut trace = TrainTrace {
        records: vec![EpochRecord {
            epoch: 0,
            loss: initial,
            update_norm: 0.0,
        }],
    };
    for epoch in 1..=epochs {
        let (ga, gb) = reconstruction_gradients(x, &a, &b);
        let update_norm = eta * (frobenius_sq(&ga) + frobenius_sq(&gb)).sqrt();
        a -= eta * ga;
        b -= eta * gb;
        let loss = reconstruction_loss(x, &a, &b);
        if !loss.is_finite() || loss > 10.0 * initial {
            return Err(Error::StepSize { loss, initial });
        }
        trace.records.push(EpochRecord {
            epoch,
            loss,
            update_norm,
        });
    }
    Ok(BpResult {
        loadings: a,
        encoder: b,
        trace,
    })
}
