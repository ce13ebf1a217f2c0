mod common;

use analog_portfolio::market_data::*;
use analog_portfolio::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

#[test]
fn noiseless_single_factor() {
    let a = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
    let latents = DMatrix::from_element(1, 5, 1.0);
    let r = generate_from_latents(&a, &latents, &DVector::zeros(2), 3).unwrap();
    assert!(r.values().iter().all(|&v| v == 1.0));
}

#[test]
fn synthetic_covariance_approaches_population() {
    let mut rng = common::rng(17);
    let a = common::gaussian_matrix(20, 3, &mut rng);
    let g = common::gaussian_matrix(3, 3, &mut rng);
    let latent_cov = &g * g.transpose() / 3.0;
    let latent_cov = (&latent_cov + latent_cov.transpose()) / 2.0;
    let noise = DVector::from_fn(20, |i, _| 0.1 + 0.01 * i as f64);
    let returns = generate_synthetic_returns(&a, &latent_cov, &noise, 10_000, 5).unwrap();
    let s = sample_covariance(&demean(&returns)).unwrap();
    let mut population = &a * &latent_cov * a.transpose();
    for i in 0..20 {
        population[(i, i)] += noise[i] * noise[i];
    }
    let rel = (s.matrix() - &population).norm() / population.norm();
    assert!(rel <= 0.05, "relative error {rel}");
}

#[test]
fn synthetic_is_seeded() {
    let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.5, 0.5, 0.0, 1.0]);
    let p = DMatrix::identity(2, 2);
    let noise = DVector::from_element(3, 0.2);
    let x = generate_synthetic_returns(&a, &p, &noise, 40, 9).unwrap();
    let y = generate_synthetic_returns(&a, &p, &noise, 40, 9).unwrap();
    let z = generate_synthetic_returns(&a, &p, &noise, 40, 10).unwrap();
    assert_eq!(x, y);
    assert_ne!(x, z);
}

#[test]
fn indefinite_latent_covariance_rejected() {
    let a = DMatrix::identity(2, 2);
    let p = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    let err = generate_synthetic_returns(&a, &p, &DVector::zeros(2), 3, 0).unwrap_err();
    assert!(matches!(err, Error::NotPsd { .. }), "{err:?}");
}

#[test]
fn raw_returns_refused_by_covariance() {
    let r = ReturnsMatrix::from_matrix(DMatrix::from_element(2, 3, 1.0)).unwrap();
    assert!(matches!(sample_covariance(&r), Err(Error::Contract(_))));
    assert!(mean_returns(&demean(&r)).is_err());
}

#[test]
fn two_asset_hand_calculation() {
    let csv = "AAA,BBB\n0.1,0.2\n0.3,0.0\n";
    let r = load_returns(csv.as_bytes()).unwrap();
    assert_eq!(r.tickers(), ["AAA", "BBB"]);
    let mu = mean_returns(&r).unwrap();
    assert!((mu.as_vector()[0] - 0.2).abs() < 1e-15);
    let s = sample_covariance(&demean(&r)).unwrap();
    let expected = DMatrix::from_row_slice(2, 2, &[0.01, -0.01, -0.01, 0.01]);
    assert!((s.matrix() - expected).amax() < 1e-15);
}

#[test]
fn parse_errors_locate_the_field() {
    match load_returns("A,B\n1,2\n3,x\n".as_bytes()) {
        Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (3, 2)),
        other => panic!("{other:?}"),
    }
    assert!(matches!(load_returns("A,B\n".as_bytes()), Err(Error::NoSamples)));
}

fn returns_strategy() -> impl Strategy<Value = DMatrix<f64>> {
    (1usize..6, 1usize..12).prop_flat_map(|(n, big_n)| {
        proptest::collection::vec(-10.0f64..10.0, n * big_n)
            .prop_map(move |v| DMatrix::from_vec(n, big_n, v))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn covariance_matches_two_pass(x in returns_strategy()) {
        let r = ReturnsMatrix::from_matrix(x.clone()).unwrap();
        let s = sample_covariance(&demean(&r)).unwrap();
        let oracle = common::two_pass_covariance(&x);
        let scale = oracle.amax().max(1.0);
        prop_assert!((s.matrix() - &oracle).amax() <= 1e-10 * scale);
        prop_assert_eq!(s.matrix().clone(), s.matrix().transpose());
    }

    #[test]
    fn demeaned_rows_sum_to_zero(x in returns_strategy()) {
        let d = demean(&ReturnsMatrix::from_matrix(x.clone()).unwrap());
        for (row, orig) in d.values().row_iter().zip(x.row_iter()) {
            let scale = orig.amax().max(1.0) * x.ncols() as f64;
            prop_assert!(row.sum().abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn csv_round_trip_is_exact(x in returns_strategy(), tiny in any::<bool>()) {
        let x = if tiny { x * 1e-9 } else { x };
        let r = ReturnsMatrix::from_matrix(x).unwrap();
        let mut buf = Vec::new();
        save_returns(&r, &mut buf).unwrap();
        let back = load_returns(buf.as_slice()).unwrap();
        prop_assert_eq!(back.values(), r.values());
        prop_assert_eq!(back.tickers(), r.tickers());
    }
}
