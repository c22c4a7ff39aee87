use gwin_core::data::{load_dataset_dir, normalize, write_idx, LabeledImageSet, IMAGE_PIXELS};
use std::path::PathBuf;

#[test]
fn normalization_matches_hand_arithmetic() {
    let mut raw = vec![0.0; 2 * IMAGE_PIXELS];
    raw[0] = 128.0;
    raw[1] = 255.0;
    raw[IMAGE_PIXELS + 5] = 1.0;
    let set = normalize(LabeledImageSet::new("raw", raw, vec![3, 9]).unwrap()).unwrap();
    assert_eq!(set.images[0], 128.0 / 255.0);
    assert!((set.images[0] - 0.50196).abs() < 1e-5);
    assert_eq!(set.images[1], 1.0);
    assert_eq!(set.images[2], 0.0);
    assert_eq!(set.images[IMAGE_PIXELS + 5], 1.0 / 255.0);
}

#[test]
fn dataset_dir_accepts_plain_idx_files() {
    let dir = tempfile::tempdir().unwrap();
    let labels: Vec<u8> = (0..60_000).map(|i| (i % 10) as u8).collect();
    let full = LabeledImageSet::new("full", vec![7.0; 60_000 * IMAGE_PIXELS], labels).unwrap();
    write_idx(&full, dir.path().join("train-images-idx3-ubyte"), dir.path().join("train-labels-idx1-ubyte")).unwrap();
    let test = LabeledImageSet::new("test", vec![255.0; 3 * IMAGE_PIXELS], vec![1, 2, 3]).unwrap();
    write_idx(&test, dir.path().join("t10k-images-idx3-ubyte"), dir.path().join("t10k-labels-idx1-ubyte")).unwrap();
    let split = load_dataset_dir(dir.path(), 7).unwrap();
    assert_eq!((split.train.len(), split.validation.len(), split.test.len()), (50_000, 10_000, 3));
    assert_eq!(split.test.images[0], 1.0);
    assert_eq!(split.train.images[0], 7.0 / 255.0);
    let again = load_dataset_dir(dir.path(), 7).unwrap();
    assert_eq!(split.validation_indices, again.validation_indices);
}

/// Uses the real IDX files under `$GWIN_DATA_DIR/digits` and `$GWIN_DATA_DIR/fashion`.
#[test]
#[ignore = "needs GWIN_DATA_DIR"]
fn real_datasets_have_the_standard_sizes() {
    let root = PathBuf::from(std::env::var_os("GWIN_DATA_DIR").expect("GWIN_DATA_DIR is not set"));
    for name in ["digits", "fashion"] {
        let split = load_dataset_dir(root.join(name), 0).unwrap();
        assert_eq!(split.train.len() + split.validation.len(), 60_000);
        assert_eq!(split.test.len(), 10_000);
        split.train.check_normalized().unwrap();
        let mut counts = [0usize; 10];
        split.test.labels.iter().for_each(|&y| counts[y as usize] += 1);
        assert!(counts.iter().all(|&c| c > 800), "{name}: {counts:?}");
    }
}
