mod common;

use common::{vote_set, PaintTransformer, PixelClassifier};
use gwin_core::classifier::CertaintyMetric;
use gwin_core::classifier::{index_keys, predict_with_certainty_keyed};
use gwin_core::evaluation::{
    aggregate_rows, certainty_delta, certainty_deltas, evaluate_sweep, quantile, run_metrics, BoxStats,
};
use gwin_core::gwin::IdentityTransformer;
use gwin_core::pipeline::{infer_batch, InferenceConfig};
use gwin_core::rejection::DEFAULT_TAUS;
use gwin_core::GwinError;
use proptest::prelude::*;

/// Brute-force reference: sort, then interpolate between neighbours.
fn oracle_quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = p * (v.len() as f64 - 1.0);
    let below = pos.floor() as usize;
    if below + 1 >= v.len() {
        return v[below];
    }
    v[below] * (1.0 - (pos - below as f64)) + v[below + 1] * (pos - below as f64)
}

#[test]
fn five_value_box_plot_against_the_oracle() {
    let deltas = [-0.2, 0.0, 0.1, 0.3, 0.9];
    let s = BoxStats::from_values(&deltas).unwrap();
    for (got, p) in [(s.q1, 0.25), (s.median, 0.5), (s.q3, 0.75)] {
        assert!((got - oracle_quantile(&deltas, p)).abs() < 1e-12);
    }
    assert!(s.q1 <= s.median && s.median <= s.q3);
    assert_eq!(s.outliers, vec![0.9]);
    assert_eq!((s.whisker_low, s.whisker_high), (-0.2, 0.3));
}

#[test]
fn sweep_rows_match_per_threshold_inference() {
    let clf = PixelClassifier::new(3.0, 2.0);
    let set = vote_set(120, 9);
    let gen = PaintTransformer::new(0);
    let runs = run_metrics(&clf, &gen, &set, &DEFAULT_TAUS, 6, 21, 0).unwrap();
    for r in &runs {
        let out = infer_batch(&clf, &gen, &set.images, &InferenceConfig::new(r.tau, 6, 21), &index_keys(120)).unwrap();
        let correct = out.iter().zip(&set.labels).filter(|(o, &y)| o.final_label == y).count();
        assert!((r.overall_acc_gwin - 100.0 * correct as f64 / 120.0).abs() < 1e-9);
        let n_rej = out.iter().filter(|o| o.post_transform.is_some()).count();
        assert_eq!(r.n_rejected, n_rej);
    }
}

#[test]
fn tau_zero_row_is_the_plain_classifier() {
    let clf = PixelClassifier::new(3.0, 2.0);
    let set = vote_set(100, 5);
    let seeds = [1, 2, 3];
    let (rows, runs) = evaluate_sweep(&clf, &PaintTransformer::new(0), &set, &[0.0, 0.8], 5, &seeds).unwrap();
    assert_eq!(rows[0].pct_reject.mean, 0.0);
    assert!(rows[0].bnn_acc_rejected.is_none());
    assert_eq!(rows[0].n_runs, 3);
    for r in runs.iter().filter(|r| r.tau == 0.0) {
        let cfg = InferenceConfig::new(0.0, 5, r.seed);
        let plain =
            predict_with_certainty_keyed(&clf, &set.images, &cfg.classifier_certainty(), &index_keys(100)).unwrap();
        let acc = 100.0 * plain.iter().zip(&set.labels).filter(|(p, &y)| p.label == y).count() as f64 / 100.0;
        assert_eq!(r.overall_acc_gwin, acc);
        assert_eq!(r.overall_acc_delta, 0.0);
    }
}

#[test]
fn identity_generator_leaves_certainty_unchanged() {
    let clf = PixelClassifier::new(3.0, 2.0);
    let set = vote_set(200, 6);
    let stats = certainty_delta(&clf, &IdentityTransformer { noise_dim: 8 }, &set, 0.9, 7, 4).unwrap();
    assert!(!stats.deltas.is_empty());
    assert!(stats.deltas.iter().all(|&d| d == 0.0));
    assert_eq!(stats.fraction_increased, 0.0);
}

#[test]
fn no_rejections_is_an_error_for_certainty_delta() {
    let clf = PixelClassifier::new(3.0, 2.0);
    let set = vote_set(20, 6);
    let err = certainty_delta(&clf, &IdentityTransformer { noise_dim: 8 }, &set, 0.0, 3, 4).unwrap_err();
    assert!(matches!(err, GwinError::EmptyRejectedSubset(_)));
}

#[test]
fn batched_certainty_deltas_match_per_threshold_inference() {
    let clf = PixelClassifier::new(3.0, 2.0);
    let set = vote_set(150, 8);
    let gen = PaintTransformer::new(2);
    let taus = [0.0, 0.5, 0.8, 0.95];
    let all = certainty_deltas(&clf, &gen, &set, &taus, 6, 3).unwrap();
    assert_eq!(all.iter().map(|d| d.tau).collect::<Vec<_>>(), [0.5, 0.8, 0.95]);
    for d in &all {
        let mut cfg = InferenceConfig::new(d.tau, 6, 3);
        cfg.certainty = cfg.certainty.retaining_draws();
        let out = infer_batch(&clf, &gen, &set.images, &cfg, &index_keys(150)).unwrap();
        let want: Vec<f64> = out
            .iter()
            .zip(&set.labels)
            .filter_map(|(o, &y)| {
                let after = o.post_transform.as_ref()?.class_certainty(y as usize, CertaintyMetric::Median)?;
                Some((after - o.initial.class_certainty(y as usize, CertaintyMetric::Median)?) as f64)
            })
            .collect();
        assert_eq!(d.deltas, want, "tau {}", d.tau);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn overall_delta_is_rejected_fraction_times_rejected_delta(seed in any::<u64>(), class in 0usize..10, jitter in 0.5f32..3.0) {
        let clf = PixelClassifier::new(3.0, jitter);
        let set = vote_set(80, seed);
        let runs = run_metrics(&clf, &PaintTransformer::new(class), &set, &DEFAULT_TAUS, 5, seed, 0).unwrap();
        let mut last = 0.0;
        for r in runs {
            prop_assert!(r.pct_reject >= last);
            last = r.pct_reject;
            let implied = r.rejected_acc_delta.map_or(0.0, |d| r.pct_reject * d / 100.0);
            prop_assert!((r.overall_acc_delta - implied).abs() < 1e-9, "{} vs {}", r.overall_acc_delta, implied);
        }
    }

    #[test]
    fn aggregation_ignores_run_order(seed in any::<u64>()) {
        let clf = PixelClassifier::new(3.0, 2.0);
        let set = vote_set(40, seed);
        let gen = PaintTransformer::new(3);
        let mut runs = Vec::new();
        for (r, s) in [seed, seed ^ 1, seed ^ 2, seed ^ 3].into_iter().enumerate() {
            runs.extend(run_metrics(&clf, &gen, &set, &DEFAULT_TAUS, 4, s, r).unwrap());
        }
        let forward = aggregate_rows(&DEFAULT_TAUS, &runs);
        runs.reverse();
        let backward = aggregate_rows(&DEFAULT_TAUS, &runs);
        for (a, b) in forward.iter().zip(&backward) {
            prop_assert!((a.overall_acc_delta.mean - b.overall_acc_delta.mean).abs() < 1e-9);
            prop_assert!((a.overall_acc_delta.std - b.overall_acc_delta.std).abs() < 1e-9);
            prop_assert!((a.pct_reject.mean - b.pct_reject.mean).abs() < 1e-9);
        }
    }

    #[test]
    fn quantiles_match_the_oracle(values in prop::collection::vec(-10.0f64..10.0, 1..40), p in 0.0f64..=1.0) {
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assert!((quantile(&sorted, p) - oracle_quantile(&values, p)).abs() < 1e-9);
    }
}
