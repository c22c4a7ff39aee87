use crate::gwin_cmd::GwinTrainArgs;
use crate::plots;
use anyhow::{bail, ensure};
use clap::Args;
use gwin_core::classifier::{ArchitectureSpec, ClassifierModel, ClassifierTrainConfig};
use gwin_core::data::{build_confident_subset, load_dataset_dir, DatasetKind, DatasetSplit};
use gwin_core::evaluation::{
    aggregate_rows, certainty_deltas, render_csv, render_table, run_metrics, CertaintyDeltaStats, RunMetrics,
};
use gwin_core::gwin::{train_gwin, CriticSpec, Generator, GeneratorSpec, MetricsLog};
use gwin_core::rejection::DEFAULT_TAUS;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub dataset: DatasetKind,
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// Trained classifier (fixed-checkpoint mode).
    #[arg(long, required_unless_present = "retrain")]
    pub classifier: Option<PathBuf>,
    /// GWIN checkpoint (fixed-checkpoint mode).
    #[arg(long, required_unless_present = "retrain")]
    pub generator: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_TAUS.to_vec())]
    pub taus: Vec<f32>,
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    /// One seed per run; defaults to 0..runs.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 50)]
    pub mc_samples: usize,
    /// Retrain classifier and GWIN for every run instead of re-sampling fixed checkpoints.
    #[arg(long)]
    pub retrain: bool,
    #[arg(long, default_value_t = 30)]
    pub classifier_epochs: usize,
    #[command(flatten)]
    pub gwin: GwinTrainArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn write(path: &Path, contents: &str) -> anyhow::Result<()> {
    fs::write(path, contents)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> anyhow::Result<()> {
    let mut f = fs::File::create(path)?;
    for it in items {
        writeln!(f, "{}", serde_json::to_string(it)?)?;
    }
    Ok(())
}

fn retrained_models(a: &EvaluateArgs, split: &DatasetSplit, seed: u64) -> anyhow::Result<(ClassifierModel, Generator)> {
    let dir = a.out_dir.join(format!("retrain-{seed}"));
    fs::create_dir_all(&dir)?;
    let ccfg = ClassifierTrainConfig { epochs: a.classifier_epochs, seed, ..Default::default() };
    let mut clf = ClassifierModel::new(ArchitectureSpec::lenet5_bnn(), seed)?;
    while clf.epochs_trained < ccfg.epochs {
        clf.train_epoch(&split.train, &ccfg)?;
    }
    clf.save(dir.join("classifier.ckpt"))?;
    let gcfg = gwin_core::gwin::GwinTrainConfig { seed, ..a.gwin.config() };
    let subset = build_confident_subset(&split.train, &clf, gcfg.tau_star, a.mc_samples, seed)?;
    let mut log = MetricsLog::create(dir.join("metrics.jsonl"), Some(dir.clone()))?;
    let trainer =
        train_gwin(&subset, &split.train, &clf, GeneratorSpec::standard(), CriticSpec::standard(), gcfg, &mut log)?;
    Ok((clf, trainer.generator))
}

pub fn run(a: EvaluateArgs) -> anyhow::Result<()> {
    let seeds: Vec<u64> = if a.seeds.is_empty() { (0..a.runs as u64).collect() } else { a.seeds.clone() };
    ensure!(seeds.len() == a.runs, "--runs is {} but {} seeds were given", a.runs, seeds.len());
    fs::create_dir_all(&a.out_dir)?;
    let split = load_dataset_dir(&a.data_dir, a.split_seed)?;
    let fixed = match (&a.classifier, &a.generator, a.retrain) {
        (_, _, true) => None,
        (Some(c), Some(g), false) => Some((ClassifierModel::load(c)?, Generator::load(g)?)),
        _ => bail!("--classifier and --generator are required without --retrain"),
    };

    let mut runs: Vec<RunMetrics> = Vec::new();
    let mut deltas: Vec<CertaintyDeltaStats> = Vec::new();
    for (r, &seed) in seeds.iter().enumerate() {
        log::info!("run {} of {} (seed {seed})", r + 1, seeds.len());
        let owned;
        let (clf, generator) = match &fixed {
            Some((c, g)) => (c, g),
            None => {
                owned = retrained_models(&a, &split, seed)?;
                (&owned.0, &owned.1)
            }
        };
        runs.extend(run_metrics(clf, generator, &split.test, &a.taus, a.mc_samples, seed, r)?);
        if r == 0 {
            deltas = certainty_deltas(clf, generator, &split.test, &a.taus, a.mc_samples, seed)?;
            for &tau in &a.taus {
                if !deltas.iter().any(|d| d.tau == tau) {
                    log::info!("nothing rejected at tau = {tau}");
                }
            }
        }
    }
    let rows = aggregate_rows(&a.taus, &runs);
    let name = a.dataset.name();
    jsonl(&a.out_dir.join("rows.jsonl"), &rows)?;
    jsonl(&a.out_dir.join("runs.jsonl"), &runs)?;
    jsonl(&a.out_dir.join("certainty_delta.jsonl"), &deltas)?;
    let table = render_table(&rows);
    write(&a.out_dir.join("table.txt"), &table)?;
    write(&a.out_dir.join("table.csv"), &render_csv(&rows))?;
    write(
        &a.out_dir.join("accuracy.svg"),
        &plots::accuracy_curves(&rows, &format!("{name}: rejected-subset accuracy")),
    )?;
    write(
        &a.out_dir.join("certainty_delta.svg"),
        &plots::certainty_boxes(&deltas, &format!("{name}: change in ground-truth certainty")),
    )?;
    print!("{table}");
    Ok(())
}
