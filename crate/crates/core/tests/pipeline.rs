mod common;

use common::{vote_set, PaintTransformer, PixelClassifier};
use gwin_core::classifier::{index_keys, predict_with_certainty_keyed};
use gwin_core::data::IMAGE_PIXELS;
use gwin_core::gwin::IdentityTransformer;
use gwin_core::pipeline::{infer, infer_batch, InferenceConfig, InferencePath};
use gwin_core::rejection::reject;
use proptest::prelude::*;

#[test]
fn tau_zero_is_the_base_classifier() {
    let clf = PixelClassifier::new(4.0, 1.0);
    let set = vote_set(50, 1);
    let cfg = InferenceConfig::new(0.0, 7, 3);
    let out = infer_batch(&clf, &PaintTransformer::new(0), &set.images, &cfg, &index_keys(50)).unwrap();
    let plain = predict_with_certainty_keyed(&clf, &set.images, &cfg.classifier_certainty(), &index_keys(50)).unwrap();
    for (r, p) in out.iter().zip(&plain) {
        assert_eq!(r.path, InferencePath::Direct);
        assert!(r.post_transform.is_none());
        assert_eq!(r.final_label, p.label);
        assert_eq!(&r.initial, p);
    }
}

#[test]
fn tau_one_transforms_everything() {
    let clf = PixelClassifier::new(4.0, 1.0);
    let set = vote_set(40, 2);
    let gen = PaintTransformer::new(6);
    let out = infer_batch(&clf, &gen, &set.images, &InferenceConfig::new(1.0, 5, 0), &index_keys(40)).unwrap();
    assert!(out.iter().all(|r| r.path == InferencePath::Transformed));
    assert!(out.iter().all(|r| r.final_label == 6));
    assert!(out.iter().all(|r| r.post_transform.as_ref().unwrap().label == 6));
    assert_eq!(gen.images_seen.get(), 40);
}

#[test]
fn repeated_calls_are_identical() {
    let clf = PixelClassifier::new(3.0, 2.0);
    let set = vote_set(30, 3);
    let gen = IdentityTransformer { noise_dim: 3 };
    for i in 0..30 {
        let a = infer(&clf, &gen, set.image(i), 0.7, 9, 11).unwrap();
        let b = infer(&clf, &gen, set.image(i), 0.7, 9, 11).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn rejected_input_costs_one_generator_pass_and_twice_the_sampling() {
    let mc = 6;
    // Strong vote: accepted.
    let mut sure = vec![0.0; IMAGE_PIXELS];
    sure[2] = 1.0;
    // No vote: near-uniform probabilities, rejected.
    let unsure = vec![0.0; IMAGE_PIXELS];

    let clf = PixelClassifier::new(20.0, 0.01);
    let gen = PaintTransformer::new(4);
    let r = infer(&clf, &gen, &sure, 0.8, mc, 0).unwrap();
    assert_eq!(r.path, InferencePath::Direct);
    assert_eq!((clf.images_seen.get(), gen.calls.get()), (mc, 0));

    let clf = PixelClassifier::new(20.0, 0.01);
    let r = infer(&clf, &gen, &unsure, 0.8, mc, 0).unwrap();
    assert_eq!(r.path, InferencePath::Transformed);
    assert_eq!(r.final_label, 4);
    assert_eq!((clf.images_seen.get(), gen.calls.get(), gen.images_seen.get()), (2 * mc, 1, 1));
}

#[test]
fn results_do_not_depend_on_batch_company() {
    let clf = PixelClassifier::new(3.0, 2.0);
    let set = vote_set(20, 4);
    let gen = IdentityTransformer { noise_dim: 5 };
    let cfg = InferenceConfig::new(0.9, 8, 5);
    let all = infer_batch(&clf, &gen, &set.images, &cfg, &index_keys(20)).unwrap();
    let picks = [3usize, 17, 8];
    let (x, _) = set.gather(&picks);
    let keys: Vec<u64> = picks.iter().map(|&i| i as u64).collect();
    let some = infer_batch(&clf, &gen, &x, &cfg, &keys).unwrap();
    for (r, &i) in some.iter().zip(&picks) {
        assert_eq!(r, &all[i]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn path_agrees_with_the_rejection_rule(tau in 0.0f32..=1.0, seed in any::<u64>(), jitter in 0.0f32..3.0) {
        let clf = PixelClassifier::new(3.0, jitter);
        let set = vote_set(16, seed);
        let out = infer_batch(&clf, &PaintTransformer::new(1), &set.images, &InferenceConfig::new(tau, 5, seed), &index_keys(16)).unwrap();
        for r in out {
            let d = reject(r.initial.certainty, r.initial.label, tau).unwrap();
            prop_assert_eq!(d.is_accepted(), r.path == InferencePath::Direct);
            match r.path {
                InferencePath::Direct => prop_assert_eq!(r.final_label, r.initial.label),
                InferencePath::Transformed => {
                    prop_assert!(r.initial.certainty < tau);
                    prop_assert_eq!(r.final_label, r.post_transform.unwrap().label);
                }
            }
        }
    }
}
