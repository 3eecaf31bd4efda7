use heatcast::conformal::{
    build_calibration, forecast_am, forecast_pm, lower_bound_exceedance, Channel, Exceedance, ForecastInterval,
    HoldoutSet, QrfParams, ScorePredictor,
};
use heatcast::pipeline::{fit_pipeline, PipelineSettings};
use heatcast::synth::{synth_generate, ScenarioSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Scores whose spread grows with the fitted value; independent draws.
fn draw(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let fitted: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0).collect();
    let observed = fitted
        .iter()
        .map(|f| {
            let e: f64 = rng.sample(StandardNormal);
            f + (0.5 + 0.3 * f) * e
        })
        .collect();
    (fitted, observed)
}

fn qrf(seed: u64) -> QrfParams {
    QrfParams { n_trees: 200, seed, ..QrfParams::default() }
}

#[test]
fn split_calibrated_coverage_on_exchangeable_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for alpha in [0.1, 0.3] {
        let (mut hits, mut total) = (0usize, 0usize);
        for rep in 0..20 {
            let (f, y) = draw(&mut rng, 200);
            let (hf, hy) = draw(&mut rng, 100);
            let holdout = HoldoutSet { residuals: hy.iter().zip(&hf).map(|(y, f)| y - f).collect(), inputs: hf };
            let cal = build_calibration(Channel::Pm, &f, &y, ScorePredictor::Fitted, Some(holdout), &qrf(rep)).unwrap();
            let adj = cal.adjustment(alpha);
            let (tf, ty) = draw(&mut rng, 500);
            for (f, y) in tf.iter().zip(&ty) {
                let (lo, hi) = cal.interval(*f, alpha, adj);
                hits += usize::from(lo <= *y && *y <= hi);
                total += 1;
            }
        }
        let cov = hits as f64 / total as f64;
        let se = (alpha * (1.0 - alpha) / total as f64).sqrt();
        assert!(cov >= 1.0 - alpha - 3.0 * se, "alpha {alpha}: coverage {cov} over {total}");
    }
}

#[test]
fn interval_width_is_the_score_quantile_spread() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (f, y) = draw(&mut rng, 300);
    let cal = build_calibration(Channel::Pm, &f, &y, ScorePredictor::Fitted, None, &qrf(1)).unwrap();
    assert_eq!(cal.adjustment(0.1), 0.0);
    for point in [0.5, 3.0, 7.5, 9.9] {
        for alpha in [0.05, 0.1, 0.3] {
            let (qlo, qhi) = cal.score_quantiles(point, alpha);
            let (lo, hi) = cal.interval(point, alpha, 0.0);
            assert!(((hi - lo) - (qhi - qlo)).abs() <= 1e-12 * point.abs().max(1.0));
        }
    }
}

#[test]
fn lower_coverage_never_widens_and_spread_tracks_the_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (f, y) = draw(&mut rng, 400);
    let (hf, hy) = draw(&mut rng, 120);
    let holdout = HoldoutSet { residuals: hy.iter().zip(&hf).map(|(y, f)| y - f).collect(), inputs: hf };
    for h in [None, Some(holdout)] {
        let cal = build_calibration(Channel::Pm, &f, &y, ScorePredictor::Fitted, h, &qrf(2)).unwrap();
        let (a90, a70) = (cal.adjustment(0.1), cal.adjustment(0.3));
        for k in 0..50 {
            let point = f64::from(k) / 5.0;
            let (l90, u90) = cal.interval(point, 0.1, a90);
            let (l70, u70) = cal.interval(point, 0.3, a70);
            assert!(u70 - l70 <= u90 - l90);
        }
        let width = |p: f64| {
            let (l, u) = cal.interval(p, 0.1, a90);
            u - l
        };
        assert!(width(9.0) > width(1.0));
    }
}

#[test]
fn nocturnal_point_is_loess_of_the_diurnal_point() {
    let spec = ScenarioSpec::default();
    let data = synth_generate(&spec, 21).unwrap();
    let mut settings = PipelineSettings::default();
    settings.boost.shrinkage = 0.05;
    settings.boost.max_trees = 300;
    settings.qrf.n_trees = 100;
    let model = fit_pipeline(&data.train, &data.test, &settings).unwrap();
    let am = model.am.as_ref().unwrap();
    for row in data.test.rows.iter().filter_map(|r| r.x_lagged) {
        let pm = forecast_pm(&model.pm, &row, 0.1).unwrap();
        let iv = forecast_am(&model.pm, am, &row, 0.1).unwrap();
        assert_eq!(pm.point.to_bits(), model.pm.ensemble.predict_best(&row).to_bits());
        assert_eq!(iv.point.to_bits(), am.loess.predict_value(pm.point).to_bits());
    }
    assert!(forecast_pm(&model.pm, &[1.0; 7], 0.1).is_err());
}

#[test]
fn exceedance_reads_the_lower_bound() {
    let iv = ForecastInterval {
        t_index: 0,
        date: None,
        channel: Channel::Pm,
        alpha: 0.3,
        point: 30.0,
        lower: 27.0,
        upper: 33.0,
        extrapolated: false,
        warnings: vec![],
    };
    assert_eq!(lower_bound_exceedance(&iv, 26.0), Exceedance::Probability(0.85));
    assert!(matches!(lower_bound_exceedance(&iv, 30.0), Exceedance::Indeterminate { .. }));
    match lower_bound_exceedance(&iv, 34.0) {
        Exceedance::Probability(p) => assert!((p - 0.15).abs() < 1e-15),
        other => panic!("{other:?}"),
    }
}
