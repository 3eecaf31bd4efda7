use heatcast::boosting::{loss_subgradient, mean_quantile_loss, quantile_loss, train_matrix, BoostParams};
use heatcast::tree::Matrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn dataset(seed: u64, n: usize, p: usize) -> (Matrix, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.random::<f64>()).collect()).collect();
    let y = rows
        .iter()
        .map(|r| {
            let e: f64 = rng.sample(StandardNormal);
            5.0 * r[0] + 3.0 * (6.0 * r[1 % p]).sin() + (1.0 + r[0]) * e
        })
        .collect();
    (Matrix::from_rows(&rows).unwrap(), y)
}

fn empty_test(p: usize) -> Matrix {
    Matrix::new(Vec::new(), 0, p).unwrap()
}

proptest! {
    #[test]
    fn under_forecast_costs_tau_over_one_minus_tau(y in -100.0f64..100.0, delta in 1e-3f64..50.0, tau in 0.05f64..0.95) {
        let under = quantile_loss(y, y - delta, tau);
        let over = quantile_loss(y, y + delta, tau);
        prop_assert!((under / over - tau / (1.0 - tau)).abs() <= 1e-9 * tau / (1.0 - tau));
        prop_assert!(quantile_loss(y, y, tau) == 0.0);
    }

    #[test]
    fn subgradient_sign_matches_residual(y in -10.0f64..10.0, f in -10.0f64..10.0) {
        let g = loss_subgradient(y, f, 0.9);
        if y > f { prop_assert_eq!(g, 0.9) } else if y < f { prop_assert!((g + 0.1).abs() < 1e-15) } else { prop_assert_eq!(g, 0.0) }
    }

    #[test]
    fn train_loss_never_increases(seed in 0u64..10_000, shrinkage in 0.001f64..0.1, depth in 1usize..5, tau in 0.1f64..0.95) {
        let (x, y) = dataset(seed, 60, 3);
        let params = BoostParams { tau, shrinkage, max_depth: depth, min_node: 3, max_trees: 60, subsample: 1.0, seed };
        let e = train_matrix(&x, &y, &empty_test(3), &[], &params).unwrap();
        for w in e.train_loss_curve.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9, "{} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn fitted_surface_has_tau_fraction_below_it() {
    let (x, y) = dataset(3, 3000, 4);
    let (xt, yt) = dataset(4, 1000, 4);
    let params = BoostParams { shrinkage: 0.05, max_depth: 3, max_trees: 400, ..BoostParams::default() };
    let e = train_matrix(&x, &y, &xt, &yt, &params).unwrap();
    let below = (0..y.len()).filter(|&i| y[i] <= e.predict_best(x.row(i))).count() as f64 / y.len() as f64;
    assert!((below - 0.9).abs() <= 0.05, "fraction below {below}");
}

#[test]
fn curves_and_best_iter_agree_with_predictions() {
    let (x, y) = dataset(8, 300, 3);
    let (xt, yt) = dataset(9, 200, 3);
    let params = BoostParams { shrinkage: 0.05, max_depth: 3, max_trees: 150, seed: 5, ..BoostParams::default() };
    let e = train_matrix(&x, &y, &xt, &yt, &params).unwrap();
    assert_eq!(e.train_loss_curve.len(), 151);
    let best = (0..e.test_loss_curve.len())
        .min_by(|&a, &b| e.test_loss_curve[a].total_cmp(&e.test_loss_curve[b]))
        .unwrap();
    assert_eq!(e.best_iter, best);
    for m in [0, 1, 37, 150] {
        let fit: Vec<f64> = (0..xt.n_rows()).map(|i| e.predict(xt.row(i), Some(m)).unwrap()).collect();
        assert_eq!(mean_quantile_loss(&yt, &fit, 0.9), e.test_loss_curve[m]);
    }
    assert!(e.predict(x.row(0), Some(151)).is_err());
}

#[test]
fn training_is_deterministic_under_a_seed() {
    let (x, y) = dataset(1, 200, 3);
    let params = BoostParams { shrinkage: 0.05, max_depth: 4, max_trees: 100, subsample: 0.7, seed: 42, ..BoostParams::default() };
    let a = train_matrix(&x, &y, &empty_test(3), &[], &params).unwrap();
    let b = train_matrix(&x, &y, &empty_test(3), &[], &params).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let c = train_matrix(&x, &y, &empty_test(3), &[], &BoostParams { seed: 43, ..params }).unwrap();
    assert_ne!(a.trees, c.trees);
}

#[test]
fn serialized_ensemble_predicts_identically() {
    let (x, y) = dataset(2, 150, 3);
    let params = BoostParams { shrinkage: 0.1, max_depth: 3, max_trees: 50, ..BoostParams::default() };
    let e = train_matrix(&x, &y, &empty_test(3), &[], &params).unwrap();
    let back: heatcast::boosting::BoostedEnsemble = serde_json::from_str(&serde_json::to_string(&e).unwrap()).unwrap();
    for i in 0..x.n_rows() {
        assert_eq!(back.predict_best(x.row(i)).to_bits(), e.predict_best(x.row(i)).to_bits());
    }
}
