//! Reference computations used only by tests. Each one avoids the library
//! code path it checks.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn uniform_matrix(rows: usize, cols: usize, half: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-half..=half))
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| m[(i, j)]).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>() + off;
        if off <= 1e-30 * scale.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut vals: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
    vals
}

/// Covariance with explicit means subtracted first, by plain loops.
pub fn two_pass_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, big_n) = x.shape();
    let means: Vec<f64> = (0..n)
        .map(|i| (0..big_n).map(|k| x[(i, k)]).sum::<f64>() / big_n as f64)
        .collect();
    DMatrix::from_fn(n, n, |i, j| {
        (0..big_n)
            .map(|k| (x[(i, k)] - means[i]) * (x[(j, k)] - means[j]))
            .sum::<f64>()
            / big_n as f64
    })
}

/// Best rank-`r` reconstruction loss of `‖X - ABX‖_F²`: the sum of the
/// dropped eigenvalues of `X X^T`, from the singular values of `X`.
pub fn pca_floor(x: &DMatrix<f64>, r: usize) -> f64 {
    let mut sv: Vec<f64> = x.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv.iter().skip(r).map(|s| s * s).sum()
}

/// Minimizes `-½ wᵀJw - mᵀw` over `[0, 1]^n` by accelerated projected
/// gradient with step `1/L`.
pub fn projected_gradient_qp(j: &DMatrix<f64>, m: &DVector<f64>, iters: usize) -> DVector<f64> {
    let n = m.len();
    let hess = -j;
    let lip = jacobi_eigenvalues(&hess).last().copied().unwrap_or(1.0).max(1e-12);
    let project = |w: DVector<f64>| w.map(|v| v.clamp(0.0, 1.0));
    let mut w = DVector::from_element(n, 0.5);
    let mut y = w.clone();
    let mut t = 1.0_f64;
    for _ in 0..iters {
        let grad = &hess * &y - m;
        let next = project(&y - grad / lip);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        y = &next + (&next - &w) * ((t - 1.0) / t_next);
        w = next;
        t = t_next;
    }
    w
}

pub fn qp_objective(j: &DMatrix<f64>, m: &DVector<f64>, w: &DVector<f64>) -> f64 {
    -0.5 * w.dot(&(j * w)) - m.dot(w)
}

/// Central differences of `f` at `x`.
pub fn central_difference<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `exp(M t)` by scaling and squaring a truncated Taylor series.
pub fn taylor_expm(m: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let n = m.nrows();
    let a = m * t;
    let norm = a.iter().map(|v| v.abs()).fold(0.0, f64::max) * n as f64;
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let a = a / 2f64.powi(squarings as i32);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..30 {
        term = &term * &a / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Two-asset frontier: weights, and variance at target `r`.
pub fn two_asset_frontier(mu: [f64; 2], sigma: [[f64; 2]; 2], r: f64) -> ([f64; 2], f64) {
    let w1 = (r - mu[1]) / (mu[0] - mu[1]);
    let w2 = 1.0 - w1;
    let var = w1 * w1 * sigma[0][0] + w2 * w2 * sigma[1][1] + 2.0 * w1 * w2 * sigma[0][1];
    ([w1, w2], var)
}
