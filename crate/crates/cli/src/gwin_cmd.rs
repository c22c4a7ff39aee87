use anyhow::{ensure, Context};
use clap::{Args, ValueEnum};
use gwin_core::classifier::ClassifierModel;
use gwin_core::data::{load_dataset_dir, ConfidentSubset};
use gwin_core::gwin::{
    train_gwin, CriticSpec, GeneratorSpec, GwinTrainConfig, GwinTrainer, IterationUnit, MetricsLog, TrainingFeed,
};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Unit {
    /// Count generator updates.
    Generator,
    /// Count critic and generator updates together.
    Total,
}

#[derive(Args, Clone)]
pub struct GwinTrainArgs {
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long, value_enum, default_value = "generator")]
    pub iteration_unit: Unit,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f32>,
    #[arg(long)]
    pub lambda_gp: Option<f32>,
    #[arg(long)]
    pub lambda_loss: Option<f32>,
    #[arg(long)]
    pub n_critic: Option<usize>,
    #[arg(long, default_value_t = 0.95)]
    pub tau_star: f32,
    #[arg(long, default_value_t = 0)]
    pub gwin_seed: u64,
    #[arg(long, default_value_t = 5000)]
    pub checkpoint_every: usize,
    #[arg(long, default_value_t = 100)]
    pub log_every: usize,
}

impl GwinTrainArgs {
    pub fn config(&self) -> GwinTrainConfig {
        let d = GwinTrainConfig::default();
        GwinTrainConfig {
            iterations: self.iterations.unwrap_or(d.iterations),
            iteration_unit: match self.iteration_unit {
                Unit::Generator => IterationUnit::GeneratorSteps,
                Unit::Total => IterationUnit::TotalUpdates,
            },
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            learning_rate: self.lr.unwrap_or(d.learning_rate),
            lambda_gp: self.lambda_gp.unwrap_or(d.lambda_gp),
            lambda_loss: self.lambda_loss.unwrap_or(d.lambda_loss),
            n_critic: self.n_critic.unwrap_or(d.n_critic),
            tau_star: self.tau_star,
            seed: self.gwin_seed,
            checkpoint_every: self.checkpoint_every,
            log_every: self.log_every,
            ..d
        }
    }
}

#[derive(Args)]
pub struct TrainGwinArgs {
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub classifier: PathBuf,
    /// Confident-subset sidecar from `build-subset`.
    #[arg(long)]
    pub subset: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// Receives metrics.jsonl and checkpoints; an existing gwin-latest.ckpt is resumed.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub train: GwinTrainArgs,
}

pub fn latest(dir: &Path) -> PathBuf {
    dir.join("gwin-latest.ckpt")
}

pub fn train(a: TrainGwinArgs) -> anyhow::Result<()> {
    let split = load_dataset_dir(&a.data_dir, a.split_seed)?;
    let clf = ClassifierModel::load(&a.classifier)?;
    let subset = ConfidentSubset::load(&a.subset).with_context(|| format!("reading {}", a.subset.display()))?;
    if let Some(s) = subset.split_seed {
        ensure!(s == a.split_seed, "subset was built with split seed {s}, not {}", a.split_seed);
    }
    std::fs::create_dir_all(&a.out_dir)?;
    let cfg = a.train.config();
    let mut log = MetricsLog::create(a.out_dir.join("metrics.jsonl"), Some(a.out_dir.clone()))?;
    let resume = latest(&a.out_dir);
    let trainer = if resume.exists() {
        let mut t = GwinTrainer::load(&resume)?;
        log::info!("resuming at iteration {}", t.iteration);
        t.cfg = GwinTrainConfig { iterations: cfg.iterations, iteration_unit: cfg.iteration_unit, ..t.cfg };
        ensure!(clf.parameter_hash() == subset.classifier_hash, "subset was built with a different classifier");
        let feed = TrainingFeed { train: &split.train, confident: &subset.member_indices };
        t.run(&feed, &clf, &mut log)?;
        t
    } else {
        train_gwin(&subset, &split.train, &clf, GeneratorSpec::standard(), CriticSpec::standard(), cfg, &mut log)?
    };
    trainer.save(&resume)?;
    println!(
        "{}",
        serde_json::json!({ "checkpoint": resume, "iteration": trainer.iteration, "seconds": trainer.elapsed })
    );
    Ok(())
}
