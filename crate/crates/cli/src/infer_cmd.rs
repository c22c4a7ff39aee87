use clap::Args;
use gwin_core::classifier::ClassifierModel;
use gwin_core::data::{load_idx_images, IMAGE_PIXELS};
use gwin_core::gwin::Generator;
use gwin_core::pipeline::{infer_batch, InferenceConfig, InferencePath};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

#[derive(Args)]
pub struct InferArgs {
    /// IDX image file (optionally .gz).
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub classifier: PathBuf,
    /// GWIN checkpoint; only the generator is used.
    #[arg(long)]
    pub generator: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    pub tau: f32,
    #[arg(long, default_value_t = 50)]
    pub mc_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Key of the first image; later images get consecutive keys.
    #[arg(long, default_value_t = 0)]
    pub first_key: u64,
    /// JSON-lines output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(a: InferArgs) -> anyhow::Result<()> {
    let images = load_idx_images(&a.images)?;
    let clf = ClassifierModel::load(&a.classifier)?;
    let generator = Generator::load(&a.generator)?;
    let n = images.len() / IMAGE_PIXELS;
    let keys: Vec<u64> = (a.first_key..a.first_key + n as u64).collect();
    let cfg = InferenceConfig::new(a.tau, a.mc_samples, a.seed);
    let results = infer_batch(&clf, &generator, &images, &cfg, &keys)?;
    let mut out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let mut transformed = 0;
    for (key, r) in keys.iter().zip(&results) {
        transformed += usize::from(r.path == InferencePath::Transformed);
        let line = serde_json::json!({
            "key": key,
            "final_label": r.final_label,
            "path": r.path,
            "initial_label": r.initial.label,
            "initial_certainty": r.initial.certainty,
            "post_transform_label": r.post_transform.as_ref().map(|p| p.label),
            "post_transform_certainty": r.post_transform.as_ref().map(|p| p.certainty),
            "tau": r.tau,
        });
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    log::info!("{n} images, {transformed} transformed at tau = {}", a.tau);
    Ok(())
}
