//! Classify, reject, transform, relabel.

pub mod flops;

pub use flops::{classifier_flops, dense_flops, generator_flops, FlopReport, LayerFlops};

use crate::classifier::{
    index_keys, predict_with_certainty_keyed, CertaintyClassifier, CertaintyConfig, CertaintyPrediction,
};
use crate::data::IMAGE_PIXELS;
use crate::error::{GwinError, Result};
use crate::gwin::{keyed_noise, Transformer};
use crate::nn::random::derive_seed;
use crate::rejection::{reject, Outcome};
use serde::{Deserialize, Serialize};

/// Examples pushed through the generator at once.
const TRANSFORM_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferencePath {
    Direct,
    Transformed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub final_label: u8,
    pub path: InferencePath,
    pub initial: CertaintyPrediction,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub post_transform: Option<CertaintyPrediction>,
    pub tau: f32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub tau: f32,
    /// `certainty.seed` is the root seed. The initial and relabel passes share
    /// one derived classifier stream, so an unchanged image gets unchanged
    /// certainties; the noise uses another.
    pub certainty: CertaintyConfig,
}

impl InferenceConfig {
    pub fn new(tau: f32, mc_samples: usize, seed: u64) -> Self {
        Self { tau, certainty: CertaintyConfig::new(mc_samples, seed) }
    }

    pub fn classifier_certainty(&self) -> CertaintyConfig {
        CertaintyConfig { seed: derive_seed(self.certainty.seed, &[0x1417]), ..self.certainty }
    }

    pub fn noise_seed(&self) -> u64 {
        derive_seed(self.certainty.seed, &[0x7a])
    }
}

/// Single-image inference; the image is keyed as index 0.
pub fn infer<C, G>(clf: &C, generator: &G, x: &[f32], tau: f32, mc_samples: usize, seed: u64) -> Result<InferenceResult>
where
    C: CertaintyClassifier + ?Sized,
    G: Transformer + ?Sized,
{
    if x.len() != IMAGE_PIXELS {
        return Err(GwinError::ShapeMismatch(format!(
            "expected one {IMAGE_PIXELS}-pixel image, got {} values",
            x.len()
        )));
    }
    let cfg = InferenceConfig::new(tau, mc_samples, seed);
    Ok(infer_batch(clf, generator, x, &cfg, &[0])?.remove(0))
}

/// Batch inference. Every random quantity for example `i` is keyed by
/// `keys[i]`, so results do not depend on which other examples share the call.
pub fn infer_batch<C, G>(
    clf: &C,
    generator: &G,
    images: &[f32],
    cfg: &InferenceConfig,
    keys: &[u64],
) -> Result<Vec<InferenceResult>>
where
    C: CertaintyClassifier + ?Sized,
    G: Transformer + ?Sized,
{
    let initial = predict_with_certainty_keyed(clf, images, &cfg.classifier_certainty(), keys)?;
    let mut rejected = Vec::new();
    let mut outcomes = Vec::with_capacity(initial.len());
    for (i, p) in initial.iter().enumerate() {
        let outcome = reject(p.certainty, p.label, cfg.tau)?.outcome;
        if outcome == Outcome::Reject {
            rejected.push(i);
        }
        outcomes.push(outcome);
    }
    let mut relabeled = transform_and_relabel(clf, generator, images, keys, &rejected, cfg)?.into_iter();
    Ok(initial
        .into_iter()
        .zip(outcomes)
        .map(|(initial, outcome)| match outcome {
            Outcome::Accept(label) => InferenceResult {
                final_label: label,
                path: InferencePath::Direct,
                initial,
                post_transform: None,
                tau: cfg.tau,
            },
            Outcome::Reject => {
                let post = relabeled.next().expect("one relabel per rejected example");
                InferenceResult {
                    final_label: post.label,
                    path: InferencePath::Transformed,
                    initial,
                    post_transform: Some(post),
                    tau: cfg.tau,
                }
            }
        })
        .collect())
}

/// Transforms `images[which]` with one keyed noise draw each and relabels the
/// results. Output order follows `which`.
pub fn transform_and_relabel<C, G>(
    clf: &C,
    generator: &G,
    images: &[f32],
    keys: &[u64],
    which: &[usize],
    cfg: &InferenceConfig,
) -> Result<Vec<CertaintyPrediction>>
where
    C: CertaintyClassifier + ?Sized,
    G: Transformer + ?Sized,
{
    let n = images.len() / IMAGE_PIXELS;
    if keys.len() != n {
        return Err(GwinError::ShapeMismatch(format!("{n} images but {} keys", keys.len())));
    }
    let relabel = cfg.classifier_certainty();
    let mut out = Vec::with_capacity(which.len());
    for chunk in which.chunks(TRANSFORM_CHUNK) {
        let mut x = Vec::with_capacity(chunk.len() * IMAGE_PIXELS);
        let mut chunk_keys = Vec::with_capacity(chunk.len());
        for &i in chunk {
            x.extend_from_slice(&images[i * IMAGE_PIXELS..(i + 1) * IMAGE_PIXELS]);
            chunk_keys.push(keys[i]);
        }
        let z = keyed_noise(chunk_keys.iter().copied(), generator.noise_dim(), cfg.noise_seed());
        let transformed = generator.transform(&x, &z)?;
        if transformed.len() != x.len() {
            return Err(GwinError::ShapeMismatch(format!(
                "generator returned {} values for {} inputs",
                transformed.len(),
                x.len()
            )));
        }
        out.extend(predict_with_certainty_keyed(clf, &transformed, &relabel, &chunk_keys)?);
    }
    Ok(out)
}

/// Convenience for a set whose keys are its own indices.
pub fn infer_set<C, G>(clf: &C, generator: &G, images: &[f32], cfg: &InferenceConfig) -> Result<Vec<InferenceResult>>
where
    C: CertaintyClassifier + ?Sized,
    G: Transformer + ?Sized,
{
    infer_batch(clf, generator, images, cfg, &index_keys(images.len() / IMAGE_PIXELS))
}
