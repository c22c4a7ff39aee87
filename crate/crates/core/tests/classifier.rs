use gwin_core::classifier::{
    predict_with_certainty, predict_with_certainty_keyed, ArchitectureSpec, CertaintyConfig, ClassifierModel,
    ClassifierTrainConfig,
};
use gwin_core::data::{build_confident_subset, IMAGE_PIXELS, NUM_CLASSES};
use gwin_core::synthetic::{blob_set, toy_classifier_spec, BlobParams, BlobSet};

fn blobs(n: usize, seed: u64) -> BlobSet {
    blob_set("blobs", n, 0.3, &BlobParams::default(), seed).unwrap()
}

fn trained_toy(epochs: usize, learning_rate: f32) -> (ClassifierModel, BlobSet) {
    let data = blobs(800, 1);
    let clean: Vec<usize> = (0..data.set.len()).filter(|&i| !data.corrupted[i]).collect();
    let clean = data.set.subset("clean", &clean);
    let cfg = ClassifierTrainConfig { epochs, learning_rate, batch_size: 32, seed: 2, ..Default::default() };
    let mut clf = ClassifierModel::new(toy_classifier_spec(), 2).unwrap();
    for _ in 0..epochs {
        clf.train_epoch(&clean, &cfg).unwrap();
    }
    (clf, data)
}

#[test]
fn one_epoch_lowers_the_loss_on_a_small_subset() {
    let data = blobs(100, 5);
    let mut clf = ClassifierModel::new(ArchitectureSpec::lenet5_bnn(), 3).unwrap();
    let cfg = ClassifierTrainConfig { epochs: 1, batch_size: 10, seed: 4, ..Default::default() };
    let before = clf.negative_elbo(&data.set, 9);
    clf.train_epoch(&data.set, &cfg).unwrap();
    let after = clf.negative_elbo(&data.set, 9);
    assert!(after < before, "{before} -> {after}");
}

#[test]
fn a_fitted_training_image_is_certain() {
    let (clf, data) = trained_toy(8, 1e-2);
    let probs = clf.mean_probabilities(&data.set.images);
    let fitted = (0..data.set.len())
        .find(|&i| {
            let row = &probs[i * NUM_CLASSES..(i + 1) * NUM_CLASSES];
            row[data.set.labels[i] as usize] >= 0.999
        })
        .expect("no training image is fitted under the mean weights");
    let p = predict_with_certainty(&clf, data.set.image(fitted), &CertaintyConfig::new(20, 0)).unwrap().remove(0);
    assert_eq!(p.label, data.set.labels[fitted]);
    assert!(p.certainty >= 0.99, "{}", p.certainty);
}

#[test]
fn certainty_is_reproducible_and_draw_sensitive() {
    let (clf, data) = trained_toy(1, 1e-3);
    let x = &data.set.images[..8 * IMAGE_PIXELS];
    let cfg = CertaintyConfig::new(7, 11);
    let a = predict_with_certainty(&clf, x, &cfg).unwrap();
    let b = predict_with_certainty(&clf, x, &cfg).unwrap();
    assert_eq!(a, b);
    let keys: Vec<u64> = (0..8).collect();
    let keyed = predict_with_certainty_keyed(&clf, x, &cfg, &keys).unwrap();
    assert_eq!(a, keyed);
    let other = predict_with_certainty(&clf, x, &CertaintyConfig::new(7, 12)).unwrap();
    assert!(a.iter().zip(&other).any(|(p, q)| p.certainty != q.certainty));
}

#[test]
fn vacuous_threshold_keeps_exactly_the_correct_examples() {
    let (clf, data) = trained_toy(1, 1e-3);
    let s = build_confident_subset(&data.set, &clf, 0.0, 5, 3).unwrap();
    let preds = predict_with_certainty(&clf, &data.set.images, &CertaintyConfig::new(5, 3)).unwrap();
    let correct: Vec<usize> = (0..data.set.len()).filter(|&i| preds[i].label == data.set.labels[i]).collect();
    assert_eq!(s.member_indices, correct);
    assert!(correct.len() < data.set.len(), "corrupted images should include some mistakes");
}

#[test]
fn untrained_classifier_is_refused() {
    let clf = ClassifierModel::new(toy_classifier_spec(), 0).unwrap();
    let x = vec![0.0; IMAGE_PIXELS];
    assert!(predict_with_certainty(&clf, &x, &CertaintyConfig::new(3, 0)).is_err());
}
