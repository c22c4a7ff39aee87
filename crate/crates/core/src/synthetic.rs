//! Two-blob toy task for end-to-end checks and the browser demo.
//!
//! Class 0 puts a sharp Gaussian blob on the left half of the image and
//! class 1 on the right half. Corrupted examples dim the true blob and add a
//! wide distractor blob with more total mass on the opposite side. The true
//! class is still given by where the sharp blob sits.

use crate::classifier::{ArchitectureSpec, ClassifierModel, ClassifierTrainConfig, LayerSpec, Shape};
use crate::data::{build_confident_subset, ConfidentSubset, LabeledImageSet, IMAGE_PIXELS, IMAGE_SIDE};
use crate::error::Result;
use crate::gwin::{CriticSpec, GeneratorLayout, GeneratorSpec, GwinTrainConfig, GwinTrainer, TrainingFeed};
use crate::nn::random::{derive_seed, seeded};
use crate::nn::{Activation, Padding};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobParams {
    pub sharp_sigma: f32,
    pub wide_sigma: f32,
    /// Horizontal blob centre for class 0; class 1 mirrors it.
    pub left_col: f32,
    pub jitter: f32,
    /// Amplitude range of the true blob in corrupted examples.
    pub dim_amplitude: (f32, f32),
    /// Distractor-to-true mass ratio range in corrupted examples.
    pub distractor_mass: (f32, f32),
    pub background_noise: f32,
}

impl Default for BlobParams {
    fn default() -> Self {
        Self {
            sharp_sigma: 2.0,
            wide_sigma: 4.5,
            left_col: 8.0,
            jitter: 2.0,
            dim_amplitude: (0.5, 0.8),
            distractor_mass: (1.5, 3.0),
            background_noise: 0.05,
        }
    }
}

/// Images plus a flag marking which ones were corrupted.
#[derive(Clone, Debug)]
pub struct BlobSet {
    pub set: LabeledImageSet,
    pub corrupted: Vec<bool>,
}

fn add_blob(img: &mut [f32], row: f32, col: f32, sigma: f32, amplitude: f32) {
    let s2 = 2.0 * sigma * sigma;
    for r in 0..IMAGE_SIDE {
        for c in 0..IMAGE_SIDE {
            let d2 = (r as f32 - row).powi(2) + (c as f32 - col).powi(2);
            img[r * IMAGE_SIDE + c] += amplitude * (-d2 / s2).exp();
        }
    }
}

/// `n` examples with alternating labels; each is corrupted with probability
/// `corrupt_fraction`.
pub fn blob_set(name: &str, n: usize, corrupt_fraction: f64, params: &BlobParams, seed: u64) -> Result<BlobSet> {
    let mut rng = seeded(derive_seed(seed, &[0xb10b]));
    let mut images = vec![0.0f32; n * IMAGE_PIXELS];
    let mut labels = Vec::with_capacity(n);
    let mut corrupted = Vec::with_capacity(n);
    let centre = (IMAGE_SIDE - 1) as f32 / 2.0;
    for (i, img) in images.chunks_exact_mut(IMAGE_PIXELS).enumerate() {
        let label = (i % 2) as u8;
        let mut jit = || rng.random_range(-params.jitter..=params.jitter);
        let side = |lbl: u8| if lbl == 0 { params.left_col } else { 2.0 * centre - params.left_col };
        let (row, col) = (centre + jit(), side(label) + jit());
        let bad = rng.random_bool(corrupt_fraction);
        if bad {
            let amp = rng.random_range(params.dim_amplitude.0..=params.dim_amplitude.1);
            let ratio = rng.random_range(params.distractor_mass.0..=params.distractor_mass.1);
            add_blob(img, row, col, params.sharp_sigma, amp);
            let wide_amp = ratio * amp * (params.sharp_sigma / params.wide_sigma).powi(2);
            let (drow, dcol) = (centre + rng.random_range(-params.jitter..=params.jitter), side(1 - label));
            add_blob(img, drow, dcol, params.wide_sigma, wide_amp);
        } else {
            add_blob(img, row, col, params.sharp_sigma, 1.0);
        }
        for p in img.iter_mut() {
            *p = (*p + params.background_noise * rng.random::<f32>()).clamp(0.0, 1.0);
        }
        labels.push(label);
        corrupted.push(bad);
    }
    Ok(BlobSet { set: LabeledImageSet::new(name, images, labels)?, corrupted })
}

/// One strided flipout convolution feeding a flipout dense layer.
pub fn toy_classifier_spec() -> ArchitectureSpec {
    ArchitectureSpec {
        name: "toy_bnn".into(),
        input: Shape::new(IMAGE_SIDE, IMAGE_SIDE, 1),
        layers: vec![
            LayerSpec::conv(5, 2, Padding::Same, 4),
            LayerSpec::Flatten,
            LayerSpec::dense(10, Activation::Identity),
        ],
    }
}

pub fn toy_generator_spec() -> GeneratorSpec {
    GeneratorSpec { noise_dim: 16, layout: GeneratorLayout::Conv { channels: [16, 8, 4] } }
}

pub fn toy_critic_spec() -> CriticSpec {
    CriticSpec { channels: [4, 8, 16], leaky_slope: 0.2 }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobExperimentConfig {
    pub params: BlobParams,
    pub n_train: usize,
    pub n_test: usize,
    pub corrupt_fraction: f64,
    pub classifier_epochs: usize,
    pub mc_samples: usize,
    pub gwin: GwinTrainConfig,
    pub seed: u64,
}

impl Default for BlobExperimentConfig {
    fn default() -> Self {
        Self {
            params: BlobParams::default(),
            n_train: 4000,
            n_test: 1000,
            corrupt_fraction: 0.4,
            classifier_epochs: 3,
            mc_samples: 20,
            gwin: GwinTrainConfig {
                batch_size: 16,
                learning_rate: 1e-3,
                iterations: 2000,
                tau_star: 0.9,
                log_every: 100,
                checkpoint_every: 1_000_000,
                ..GwinTrainConfig::default()
            },
            seed: 0,
        }
    }
}

/// Data, a toy classifier trained on clean examples only, its confident
/// subset and a fresh GWIN trainer.
pub struct BlobExperiment {
    pub cfg: BlobExperimentConfig,
    pub train: BlobSet,
    pub test: BlobSet,
    pub classifier: ClassifierModel,
    pub confident: ConfidentSubset,
    pub trainer: GwinTrainer,
}

impl BlobExperiment {
    pub fn new(cfg: BlobExperimentConfig) -> Result<Self> {
        let train =
            blob_set("blobs-train", cfg.n_train, cfg.corrupt_fraction, &cfg.params, derive_seed(cfg.seed, &[1]))?;
        let test = blob_set("blobs-test", cfg.n_test, cfg.corrupt_fraction, &cfg.params, derive_seed(cfg.seed, &[2]))?;
        let clean: Vec<usize> = (0..train.set.len()).filter(|&i| !train.corrupted[i]).collect();
        let clean_set = train.set.subset("blobs-clean", &clean);
        let ccfg = ClassifierTrainConfig {
            epochs: cfg.classifier_epochs,
            batch_size: 64,
            seed: derive_seed(cfg.seed, &[3]),
            ..ClassifierTrainConfig::default()
        };
        let mut classifier = ClassifierModel::new(toy_classifier_spec(), ccfg.seed)?;
        for _ in 0..ccfg.epochs {
            classifier.train_epoch(&clean_set, &ccfg)?;
        }
        let confident = build_confident_subset(
            &train.set,
            &classifier,
            cfg.gwin.tau_star,
            cfg.mc_samples,
            derive_seed(cfg.seed, &[4]),
        )?;
        let gwin = GwinTrainConfig { seed: derive_seed(cfg.seed, &[5]), ..cfg.gwin };
        let trainer = GwinTrainer::new(toy_generator_spec(), toy_critic_spec(), gwin)?;
        Ok(Self { cfg, train, test, classifier, confident, trainer })
    }

    pub fn feed(&self) -> TrainingFeed<'_> {
        TrainingFeed { train: &self.train.set, confident: &self.confident.member_indices }
    }

    /// Runs `n` more generator iterations.
    pub fn train_steps(&mut self, n: usize) -> Result<()> {
        let feed = TrainingFeed { train: &self.train.set, confident: &self.confident.member_indices };
        for _ in 0..n {
            self.trainer.step(&feed, &self.classifier, &mut crate::gwin::NoopObserver)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_are_normalized_and_balanced() {
        let b = blob_set("t", 200, 0.5, &BlobParams::default(), 3).unwrap();
        b.set.check_normalized().unwrap();
        assert_eq!(b.set.labels.iter().filter(|&&y| y == 1).count(), 100);
        let n_bad = b.corrupted.iter().filter(|&&c| c).count();
        assert!((60..140).contains(&n_bad), "{n_bad}");
    }

    #[test]
    fn clean_blob_sits_on_its_side() {
        let b = blob_set("t", 2, 0.0, &BlobParams { background_noise: 0.0, ..BlobParams::default() }, 1).unwrap();
        let half_mass = |img: &[f32], left: bool| -> f32 {
            (0..IMAGE_PIXELS).filter(|p| (p % IMAGE_SIDE < IMAGE_SIDE / 2) == left).map(|p| img[p]).sum()
        };
        assert!(half_mass(b.set.image(0), true) > half_mass(b.set.image(0), false));
        assert!(half_mass(b.set.image(1), false) > half_mass(b.set.image(1), true));
    }
}
