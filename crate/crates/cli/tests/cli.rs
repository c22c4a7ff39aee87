use gwin_core::classifier::{ClassifierModel, ClassifierTrainConfig};
use gwin_core::data::{write_idx, LabeledImageSet};
use gwin_core::gwin::{GwinTrainConfig, GwinTrainer};
use gwin_core::synthetic::{blob_set, toy_classifier_spec, toy_critic_spec, toy_generator_spec, BlobParams};
use std::path::Path;
use std::process::{Command, Output};

fn gwin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gwin")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Trained toy classifier, fresh toy generator and a six-image IDX file.
fn toy_artifacts(dir: &Path) -> (String, String, String) {
    let blobs = blob_set("cli", 300, 0.3, &BlobParams::default(), 4).unwrap();
    let cfg = ClassifierTrainConfig { epochs: 1, batch_size: 32, seed: 1, ..Default::default() };
    let mut clf = ClassifierModel::new(toy_classifier_spec(), 1).unwrap();
    clf.train_epoch(&blobs.set, &cfg).unwrap();
    let clf_path = dir.join("clf.ckpt");
    clf.save(&clf_path).unwrap();

    let trainer = GwinTrainer::new(toy_generator_spec(), toy_critic_spec(), GwinTrainConfig::default()).unwrap();
    let gen_path = dir.join("gwin.ckpt");
    trainer.save(&gen_path).unwrap();

    let raw: Vec<f32> = blobs.set.images[..6 * 784].iter().map(|p| (p * 255.0).round()).collect();
    let six = LabeledImageSet::new("six", raw, blobs.set.labels[..6].to_vec()).unwrap();
    let img_path = dir.join("images-idx3-ubyte");
    write_idx(&six, &img_path, dir.join("labels-idx1-ubyte")).unwrap();
    let s = |p: &Path| p.to_str().unwrap().to_string();
    (s(&clf_path), s(&gen_path), s(&img_path))
}

#[test]
fn flops_lists_totals_for_all_models() {
    let out = stdout(&gwin(&["flops"]));
    let totals: Vec<&str> = out.lines().filter(|l| l.contains(" total ")).collect();
    assert_eq!(totals.len(), 3, "{out}");
    assert!(totals[0].starts_with("generator") && totals[0].ends_with("54179344"), "{}", totals[0]);
    assert!(totals[1].ends_with("15430990"), "{}", totals[1]);
}

#[test]
fn infer_writes_one_line_per_image() {
    let dir = tempfile::tempdir().unwrap();
    let (clf, generator, images) = toy_artifacts(dir.path());
    let out_path = dir.path().join("out.jsonl");
    let base = ["infer", "--images", &images, "--classifier", &clf, "--generator", &generator, "--mc-samples", "4"];

    let mut args = base.to_vec();
    args.extend(["--tau", "1.0", "--out", out_path.to_str().unwrap()]);
    stdout(&gwin(&args));
    let text = std::fs::read_to_string(&out_path).unwrap();
    let rows: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 6);
    for (k, r) in rows.iter().enumerate() {
        assert_eq!(r["key"], k as u64);
        let transformed = r["path"] == "transformed";
        assert_eq!(transformed, r["initial_certainty"].as_f64().unwrap() < 1.0);
        assert_eq!(r["post_transform_label"].is_null(), !transformed);
    }

    let mut args = base.to_vec();
    args.extend(["--tau", "0"]);
    let direct = stdout(&gwin(&args));
    assert_eq!(direct.lines().count(), 6);
    assert!(direct.lines().all(|l| l.contains(r#""path":"direct""#)), "{direct}");
}

#[test]
fn bad_arguments_fail_cleanly() {
    let o = gwin(&["evaluate", "--dataset", "cifar", "--data-dir", ".", "--out-dir", "x"]);
    assert!(!o.status.success());
    let o = gwin(&["evaluate", "--dataset", "digits", "--data-dir", ".", "--out-dir", "x"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("--classifier"));
    let o = gwin(&["infer", "--images", "/nonexistent", "--classifier", "a", "--generator", "b"]);
    assert!(!o.status.success());
}
