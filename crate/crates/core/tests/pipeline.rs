use nalgebra::DMatrix;
use proptest::prelude::*;
use vast_core::data::{build_lag_matrix, lag_vector};
use vast_core::predict::{conditional_mean, fit_vast};
use vast_core::*;

fn draw_strategy(m: usize, lags: usize) -> impl Strategy<Value = PosteriorDraw> {
    let learner = (0.1f64..5.0, -1.0f64..1.0, 0..m * lags, prop::collection::vec(-1.0f64..1.0, 2 * m))
        .prop_map(move |(nu, mu, delta, b)| BaseLearnerParams::new(nu, mu, delta, b[..m].to_vec(), b[m..].to_vec()));
    prop::collection::vec(learner, 1..4).prop_map(move |learners| PosteriorDraw { learners, sigma: DMatrix::zeros(m, m), loglik: 0.0 })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lag_matrix_rows_are_lag_vectors(t in 6usize..20, m in 1usize..4, p in 1usize..4, seed in 0u64..1000) {
        prop_assume!(t > p);
        let y = DMatrix::from_fn(t, m, |i, c| ((i * 31 + c * 7) as u64 ^ seed) as f64 / 97.0);
        let (x, yy) = build_lag_matrix(&y, p).unwrap();
        prop_assert_eq!(x.nrows(), t - p);
        for r in 0..x.nrows() {
            let v = lag_vector(&y.rows(0, p + r).into_owned(), p);
            prop_assert_eq!(x.row(r).transpose(), v);
            prop_assert_eq!(yy.row(r), y.row(p + r));
        }
    }

    #[test]
    fn noiseless_paths_follow_the_conditional_mean(draw in draw_strategy(2, 2), shift in -3.0f64..3.0, sd in 0.5f64..3.0) {
        let scale = Standardization { means: vec![shift, -shift], sds: vec![sd, 1.0] };
        let history = DMatrix::from_fn(5, 2, |i, c| shift + (i as f64 - 2.0) * 0.3 + c as f64);
        let pred = simulate_predictive(std::slice::from_ref(&draw), &history, 2, 3, 2, &scale, 1).unwrap();
        let mut std_hist = scale.apply(&history);
        for h in 0..3 {
            let g = conditional_mean(&draw, lag_vector(&std_hist, 2).as_slice());
            for c in 0..2 {
                let expected = scale.means[c] + scale.sds[c] * g[c];
                prop_assert!((pred.get(0, h, c) - expected).abs() < 1e-10);
                prop_assert_eq!(pred.get(0, h, c), pred.get(1, h, c));
            }
            let last = std_hist.nrows();
            std_hist = std_hist.insert_row(last, 0.0);
            for c in 0..2 {
                std_hist[(last, c)] = g[c];
            }
        }
    }
}

#[test]
fn fit_save_load_forecast() {
    let y = DMatrix::from_fn(60, 2, |i, c| ((i as f64) * 0.37 + c as f64).sin() + 0.05 * i as f64);
    let cfg = ModelConfig::vast(4, 2, 2);
    let settings = ChainSettings { n_burn: 30, n_save: 20, seed: 5, ..Default::default() };
    let fit = fit_vast(&y, &cfg, &settings).unwrap();
    let again = fit_vast(&y, &cfg, &settings).unwrap();
    assert_eq!(fit.draws, again.draws);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("draws.bin");
    let file = DrawFile { n_covariates: 4, lags: fit.lags, scale: Some(fit.scale.clone()), draws: fit.draws.clone() };
    save_draws(&path, &file).unwrap();
    let back = load_draws(&path).unwrap();
    assert_eq!(back, file);

    let pred = simulate_predictive(&back.draws, &y, back.lags, 4, 3, &back.standardization(), 2).unwrap();
    assert_eq!(pred.n_paths, 60);
    for s in pred.summarize(&[0.1, 0.5, 0.9]) {
        assert!(s.variance > 0.0 && s.mean.is_finite());
        assert!(s.quantiles.windows(2).all(|w| w[0].1 <= w[1].1));
    }
}
