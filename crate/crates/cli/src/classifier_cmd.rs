use anyhow::Context;
use clap::Args;
use gwin_core::classifier::{
    predict_with_certainty, ArchitectureSpec, CertaintyConfig, ClassifierModel, ClassifierTrainConfig,
};
use gwin_core::data::{build_confident_subset, load_dataset_dir, LabeledImageSet};
use std::path::PathBuf;

#[derive(Args)]
pub struct TrainArgs {
    /// Directory holding the four IDX files.
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long, default_value = "lenet5_bnn")]
    pub arch: String,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f32,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// Dropout rate for the improved architecture.
    #[arg(long)]
    pub dropout: Option<f32>,
    #[arg(long, default_value_t = 10)]
    pub mc_samples: usize,
    /// Checkpoint path; an existing file is resumed.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn accuracy(clf: &ClassifierModel, set: &LabeledImageSet, mc_samples: usize, seed: u64) -> anyhow::Result<f64> {
    let preds = predict_with_certainty(clf, &set.images, &CertaintyConfig::new(mc_samples, seed))?;
    let correct = preds.iter().zip(&set.labels).filter(|(p, &y)| p.label == y).count();
    Ok(100.0 * correct as f64 / set.len() as f64)
}

pub fn train(a: TrainArgs) -> anyhow::Result<()> {
    let split = load_dataset_dir(&a.data_dir, a.split_seed)?;
    let cfg = ClassifierTrainConfig {
        epochs: a.epochs,
        learning_rate: a.lr,
        batch_size: a.batch_size,
        seed: a.seed,
        ..Default::default()
    };
    let mut model = if a.out.exists() {
        let m = ClassifierModel::load(&a.out).with_context(|| format!("resuming {}", a.out.display()))?;
        log::info!("resuming at epoch {}", m.epochs_trained);
        m
    } else {
        let mut spec = ArchitectureSpec::by_name(&a.arch)?;
        if let Some(rate) = a.dropout {
            anyhow::ensure!(a.arch == "improved_bnn", "--dropout only applies to improved_bnn");
            spec = ArchitectureSpec::improved_bnn_with_dropout(rate);
        }
        ClassifierModel::new(spec, a.seed)?
    };
    split.train.check_normalized()?;
    while model.epochs_trained < cfg.epochs {
        let r = model.train_epoch(&split.train, &cfg)?;
        log::info!(
            "epoch {} loss {:.4} nll {:.4} kl/N {:.4} ({:.0}s)",
            r.epoch,
            r.mean_loss,
            r.mean_nll,
            r.kl_per_example,
            r.seconds
        );
        model.save(&a.out)?;
    }
    let val = accuracy(&model, &split.validation, a.mc_samples, a.seed)?;
    let test = accuracy(&model, &split.test, a.mc_samples, a.seed)?;
    let summary = serde_json::json!({
        "checkpoint": a.out,
        "architecture": model.spec.name,
        "epochs": model.epochs_trained,
        "validation_accuracy": val,
        "test_accuracy": test,
        "parameter_hash": model.parameter_hash(),
    });
    println!("{summary}");
    Ok(())
}

#[derive(Args)]
pub struct SubsetArgs {
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub classifier: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    pub tau_star: f32,
    #[arg(long, default_value_t = 10)]
    pub mc_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// JSON sidecar to write.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn build_subset(a: SubsetArgs) -> anyhow::Result<()> {
    let split = load_dataset_dir(&a.data_dir, a.split_seed)?;
    let clf = ClassifierModel::load(&a.classifier)?;
    let mut subset = build_confident_subset(&split.train, &clf, a.tau_star, a.mc_samples, a.seed)?;
    subset.split_seed = Some(a.split_seed);
    subset.save(&a.out)?;
    println!(
        "{}",
        serde_json::json!({ "subset": a.out, "size": subset.len(), "base_len": subset.base_len, "tau_star": a.tau_star })
    );
    Ok(())
}
