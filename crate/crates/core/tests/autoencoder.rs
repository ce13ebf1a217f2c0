mod common;

use analog_portfolio::autoencoder::*;
use analog_portfolio::linalg;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Relaxation that runs to machine precision.
fn exact_cfg(beta: f64) -> EpConfig {
    EpConfig {
        beta,
        eta: 1.0,
        relax_dt: 0.5,
        relax_steps: 4000,
        relax_tol: 0.0,
        ..EpConfig::default()
    }
}

fn sample(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = common::rng(seed);
    common::gaussian_matrix(n, 1, &mut rng).iter().copied().collect()
}

/// Decoder whose latent-to-output block is `a` (outputs × latents), bias 0.
fn decoder_with(a: &DMatrix<f64>) -> EnergyNetwork {
    let (n, r) = a.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut net = EnergyNetwork::bipartite(r, n, true, 1.0, Role::Decoder, &mut rng);
    let mut j = DMatrix::zeros(net.size(), net.size());
    for o in 0..n {
        for i in 0..r {
            j[(r + 1 + o, i)] = a[(o, i)];
            j[(i, r + 1 + o)] = a[(o, i)];
        }
    }
    net.set_couplings(&j).unwrap();
    net
}

fn orthonormal(n: usize, r: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = common::rng(seed);
    common::gaussian_matrix(n, r, &mut rng).qr().q()
}

fn decoder_loss(net: &EpNetwork, s: &[f64], x: &[f64], cfg: &EpConfig) -> f64 {
    let (_, xhat) = net.decode(s, cfg).unwrap();
    0.5 * x.iter().zip(&xhat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

/// EP decoder update and the analytic descent direction on the same edges.
fn decoder_update_vs_gradient(beta: f64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = common::rng(41);
    let net = EpNetwork::new(10, 3, &mut rng).unwrap();
    let cfg = exact_cfg(beta);
    let x = sample(10, 42);
    let (_, s) = net.encode(&x, &cfg).unwrap();
    let (free, xhat) = net.decode(&s, &cfg).unwrap();
    let plus = clamped_phase(&net.decoder, &free, &Nudge::Target { target: &x, beta }, &cfg).unwrap();
    let minus =
        clamped_phase(&net.decoder, &free, &Nudge::Target { target: &x, beta: -beta }, &cfg).unwrap();
    let delta = ep_weight_update(&net.decoder, &plus, &minus, &cfg);
    let mut inputs: Vec<f64> = s.clone();
    inputs.push(1.0);
    let (mut ep, mut analytic) = (Vec::new(), Vec::new());
    for (k, &o) in net.decoder.outputs().iter().enumerate() {
        for (i, &v) in inputs.iter().enumerate() {
            ep.push(delta[(o, i)]);
            analytic.push((x[k] - xhat[k]) * v);
        }
    }
    (ep, analytic)
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    num / b.iter().map(|y| y * y).sum::<f64>().sqrt()
}

#[test]
fn ep_update_matches_analytic_gradient() {
    let (ep, g) = decoder_update_vs_gradient(1e-3);
    let err = rel_err(&ep, &g);
    assert!(err <= 0.05, "relative error {err}");
    assert!(common::cosine(&ep, &g) >= 0.99);
    let (ep_half, _) = decoder_update_vs_gradient(5e-4);
    assert!(rel_err(&ep_half, &g) <= err, "{} > {err}", rel_err(&ep_half, &g));
}

#[test]
fn encoder_force_matches_finite_differences() {
    let mut rng = common::rng(5);
    let net = EpNetwork::new(10, 3, &mut rng).unwrap();
    let beta = 1e-3;
    let cfg = exact_cfg(beta);
    let x = sample(10, 6);
    let (_, s) = net.encode(&x, &cfg).unwrap();
    let (free, _) = net.decode(&s, &cfg).unwrap();
    let plus = clamped_phase(&net.decoder, &free, &Nudge::Target { target: &x, beta }, &cfg).unwrap();
    let minus =
        clamped_phase(&net.decoder, &free, &Nudge::Target { target: &x, beta: -beta }, &cfg).unwrap();
    let force = encoder_output_gradient(&net.decoder, &plus, &minus, &cfg);
    let fd = common::central_difference(|s| decoder_loss(&net, s, &x, &cfg), &s, 1e-5);
    assert!(rel_err(&force, &fd) <= 0.05, "{force:?} vs {fd:?}");

    // a small step against the force lowers the decoder loss
    let stepped: Vec<f64> = s.iter().zip(&force).map(|(v, f)| v - 1e-3 * f).collect();
    assert!(decoder_loss(&net, &stepped, &x, &cfg) < decoder_loss(&net, &s, &x, &cfg));
}

#[test]
fn encoder_force_vanishes_at_zero_loss() {
    let mut rng = common::rng(7);
    let net = EpNetwork::new(6, 2, &mut rng).unwrap();
    let beta = 1e-3;
    let cfg = exact_cfg(beta);
    let (free, xhat) = net.decode(&[0.4, -0.7], &cfg).unwrap();
    let plus = clamped_phase(&net.decoder, &free, &Nudge::Target { target: &xhat, beta }, &cfg).unwrap();
    let minus = clamped_phase(
        &net.decoder,
        &free,
        &Nudge::Target {
            target: &xhat,
            beta: -beta,
        },
        &cfg,
    )
    .unwrap();
    let force = encoder_output_gradient(&net.decoder, &plus, &minus, &cfg);
    assert!(force.iter().all(|f| f.abs() <= 1e-8), "{force:?}");
}

#[test]
fn clamped_displacement_is_linear_in_beta() {
    let mut rng = common::rng(8);
    let net = EpNetwork::new(8, 3, &mut rng).unwrap();
    let x = sample(8, 9);
    let cfg = exact_cfg(1e-2);
    let (_, s) = net.encode(&x, &cfg).unwrap();
    let (free, _) = net.decode(&s, &cfg).unwrap();
    let shift = |beta: f64| {
        let nudged =
            clamped_phase(&net.decoder, &free, &Nudge::Target { target: &x, beta }, &cfg).unwrap();
        (nudged - &free).norm()
    };
    let ratio = shift(1e-2) / shift(5e-3);
    assert!((ratio - 2.0).abs() <= 0.4, "ratio {ratio}");
}

#[test]
fn projection_network_relaxes_to_projection() {
    let mut rng = common::rng(10);
    let a = common::gaussian_matrix(6, 2, &mut rng);
    let j = &a * pseudo_inverse_encoder(&a).unwrap();
    let j = linalg::symmetrize(&j);
    let net = EnergyNetwork::dense(j.clone(), vec![], None, (0..6).collect()).unwrap();
    let x0 = common::gaussian_matrix(6, 1, &mut rng).column(0).into_owned();
    let mut state = x0.clone();
    net.relax(&mut state, &Nudge::None, &EpConfig::default(), "free").unwrap();
    let oracle = common::taylor_expm(&(&j - DMatrix::identity(6, 6)), 40.0) * &x0;
    assert!((&state - &oracle).amax() <= 1e-6);
    assert!((&state - &j * &x0).amax() <= 1e-6);

    let map = decoder_matrix(&net, DEFAULT_MAX_HORIZON).unwrap();
    assert!((&map.map - &j).amax() <= 1e-8);
}

#[test]
fn orthonormal_probe_recovers_loadings() {
    let a = orthonormal(7, 3, 11);
    let net = decoder_with(&a);
    let map = decoder_matrix(&net, DEFAULT_MAX_HORIZON).unwrap();
    assert!((&map.block - &a).amax() <= 1e-6);
    assert!(map.offsets.amax() <= 1e-12);
}

#[test]
fn pseudo_inverse_identities() {
    let a = orthonormal(5, 2, 12);
    assert!((pseudo_inverse_encoder(&a).unwrap() - a.transpose()).amax() <= 1e-12);

    let mut rng = common::rng(13);
    let a = common::gaussian_matrix(6, 3, &mut rng);
    let b = pseudo_inverse_encoder(&a).unwrap();
    assert!((&a * &b * &a - &a).amax() <= 1e-9);
    assert!((&b * &a - DMatrix::identity(3, 3)).amax() <= 1e-10);
}

#[test]
fn latent_covariance_matches_loops() {
    let mut rng = common::rng(14);
    let s = common::gaussian_matrix(4, 30, &mut rng);
    let p = latent_covariance(&s).unwrap();
    let oracle = DMatrix::from_fn(4, 4, |i, j| {
        (0..30).map(|k| s[(i, k)] * s[(j, k)]).sum::<f64>() / 30.0
    });
    assert!((&p - &oracle).amax() <= 1e-10);
    assert_eq!(p, p.transpose());
}

#[test]
fn stationary_network_does_not_move() {
    let a = orthonormal(6, 2, 15);
    let mut rng = common::rng(16);
    let data = &a * common::gaussian_matrix(2, 12, &mut rng);
    let cfg = EpConfig {
        relax_dt: 0.5,
        relax_tol: 0.0,
        relax_steps: 200,
        ..EpConfig::default()
    };
    let mut net = EpNetwork::new(6, 2, &mut rng).unwrap();
    net.decoder = decoder_with(&a);
    // the encoder is the transpose of the decoder's block
    let mut j = DMatrix::zeros(net.encoder.size(), net.encoder.size());
    for l in 0..2 {
        for i in 0..6 {
            j[(7 + l, i)] = a[(i, l)];
            j[(i, 7 + l)] = a[(i, l)];
        }
    }
    net.encoder.set_couplings(&j).unwrap();
    let (loss, update_norm) = train_epoch(&mut net, &data, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert!(loss <= 1e-20, "loss {loss}");
    assert!(update_norm <= 1e-6 * cfg.eta, "update norm {update_norm}");
}

#[test]
fn exact_representation_trains_to_zero_loss() {
    let mut rng = common::rng(17);
    let data = common::gaussian_matrix(6, 2, &mut rng) * common::gaussian_matrix(2, 10, &mut rng) * 0.5;
    let cfg = EpConfig {
        relax_dt: 0.5,
        eta: 0.02,
        seed: 3,
        ..EpConfig::default()
    };
    let mut trainer = EpTrainer::new(6, 3, cfg).unwrap();
    trainer.train(&data, 1500).unwrap();
    let loss = trainer.trace.final_loss().unwrap();
    assert!(loss <= 1e-4 * data.norm_squared(), "loss {loss} vs {}", data.norm_squared());
}

#[test]
fn relaxation_stays_bounded_under_clipping() {
    let mut rng = common::rng(18);
    let mut net = EpNetwork::new(5, 3, &mut rng).unwrap();
    let cfg = EpConfig {
        clip: 1.0,
        relax_dt: 0.5,
        ..EpConfig::default()
    };
    let big = [5.0, -4.0, 6.0, 3.0, -7.0];
    let data = DMatrix::from_column_slice(5, 1, &big);
    for _ in 0..5 {
        train_epoch(&mut net, &data, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    }
    for (nw, input) in [(&net.encoder, big.to_vec()), (&net.decoder, vec![3.0, -3.0, 2.0])] {
        let state = free_phase(nw, &input, &cfg).unwrap();
        let row_sum = (0..nw.size())
            .map(|i| nw.couplings().row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let bound = cfg.clip * (1.0 + row_sum);
        assert!(nw.free_units().iter().all(|&u| state[u].abs() <= bound));
    }
}

#[test]
fn backprop_gradients_match_finite_differences() {
    let mut rng = common::rng(19);
    let x = common::gaussian_matrix(5, 8, &mut rng);
    let a = common::gaussian_matrix(5, 2, &mut rng);
    let b = common::gaussian_matrix(2, 5, &mut rng);
    let (ga, gb) = reconstruction_gradients(&x, &a, &b);
    let params: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    let loss = |p: &[f64]| {
        let a = DMatrix::from_column_slice(5, 2, &p[..10]);
        let b = DMatrix::from_column_slice(2, 5, &p[10..]);
        reconstruction_loss(&x, &a, &b)
    };
    let fd = common::central_difference(loss, &params, 1e-5);
    let analytic: Vec<f64> = ga.iter().chain(gb.iter()).copied().collect();
    assert!(rel_err(&analytic, &fd) <= 1e-6, "{}", rel_err(&analytic, &fd));
}

#[test]
fn backprop_reaches_pca_floor() {
    let mut rng = common::rng(20);
    let x = common::gaussian_matrix(50, 50, &mut rng);
    let res = backprop_reference_train(&x, 5, 500, 1e-3, 0).unwrap();
    let floor = common::pca_floor(&x, 5);
    let loss = res.trace.final_loss().unwrap();
    assert!((loss / floor - 1.0).abs() <= 0.05, "{loss} vs {floor}");
}

#[test]
fn extracted_model_is_consistent() {
    let mut rng = common::rng(21);
    let data = common::gaussian_matrix(6, 3, &mut rng) * common::gaussian_matrix(3, 20, &mut rng);
    let s = &data * data.transpose() / 20.0;
    let cfg = EpConfig {
        relax_dt: 0.5,
        ..EpConfig::default()
    };
    let mut trainer = EpTrainer::new(6, 2, cfg).unwrap();
    trainer.train(&data, 20).unwrap();
    let model = extract_factor_model(&trainer.net, &data, &s).unwrap();
    model.validate().unwrap();
    assert_eq!(model.loadings.shape(), (6, 2));
    assert_eq!(model.encoder.as_ref().unwrap().shape(), (2, 6));
    let m = lowrank_from_autoencoder(&model.loadings, &model.latent_cov).unwrap();
    let sv = linalg::singular_values(&m);
    assert!(sv.iter().skip(2).all(|&v| v <= 1e-8 * sv[0]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn training_preserves_topology(seed in 0u64..1000, n in 2usize..7, r in 1usize..3) {
        let mut rng = common::rng(seed);
        let data = common::gaussian_matrix(n, 4, &mut rng);
        let cfg = EpConfig { relax_dt: 0.5, seed, ..EpConfig::default() };
        let mut trainer = EpTrainer::new(n, r, cfg).unwrap();
        trainer.train(&data, 3).unwrap();
        for net in [&trainer.net.encoder, &trainer.net.decoder] {
            let j = net.couplings();
            prop_assert_eq!(j.clone(), j.transpose());
            prop_assert!((0..net.size()).all(|i| j[(i, i)] == 0.0));
            for &a in net.outputs() {
                for &b in net.outputs() {
                    prop_assert_eq!(j[(a, b)], 0.0);
                }
            }
        }
        prop_assert!(trainer.trace.records.iter().all(|rec| rec.loss.is_finite() && rec.update_norm.is_finite()));
    }

    #[test]
    fn projection_lemma(seed in 0u64..10_000, n in 2usize..20, r_frac in 0.0f64..1.0) {
        let r = 1 + ((n - 1).min(7) as f64 * r_frac) as usize;
        let mut rng = common::rng(seed);
        let a = common::gaussian_matrix(n, r, &mut rng);
        let j = &a * pseudo_inverse_encoder(&a).unwrap();
        prop_assert!((&j * &j - &j).norm() <= 1e-8);
        let vals = common::jacobi_eigenvalues(&linalg::symmetrize(&j));
        prop_assert!(vals.iter().all(|&l| l.abs() <= 1e-6 || (l - 1.0).abs() <= 1e-6));
        prop_assert!(vals.iter().filter(|&&l| (l - 1.0).abs() <= 1e-6).count() <= r);
    }
}
