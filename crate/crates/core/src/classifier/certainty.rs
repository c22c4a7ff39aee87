use crate::data::{IMAGE_PIXELS, NUM_CLASSES};
use crate::error::{GwinError, Result};
use crate::nn::activation::{log_softmax_at, softmax_rows};
use serde::{Deserialize, Serialize};

/// A classifier that can be evaluated under keyed stochastic weight draws.
///
/// `draw_logits` must be a pure function of its arguments. Example `i`'s
/// randomness is keyed by `keys[i]`, so an example keeps its logits however
/// the batch around it is composed.
pub trait CertaintyClassifier {
    fn draw_logits(&self, images: &[f32], seed: u64, draw: usize, keys: &[u64]) -> Vec<f32>;

    fn is_trained(&self) -> bool;

    /// Stable identity of the parameters, recorded in derived artifacts.
    fn fingerprint(&self) -> String;
}

/// Classifiers whose negative log-likelihood can be differentiated with
/// respect to the input pixels. Parameters are never modified.
pub trait DifferentiableClassifier: CertaintyClassifier {
    /// Mean NLL under draw 0 of `seed` and its gradient with respect to `images`.
    /// The loss equals [`classifier_nll`] for the same arguments.
    fn nll_with_input_grad(&self, images: &[f32], labels: &[u8], seed: u64) -> (f32, Vec<f32>);
}

impl<T: CertaintyClassifier + ?Sized> CertaintyClassifier for &T {
    fn draw_logits(&self, images: &[f32], seed: u64, draw: usize, keys: &[u64]) -> Vec<f32> {
        (**self).draw_logits(images, seed, draw, keys)
    }

    fn is_trained(&self) -> bool {
        (**self).is_trained()
    }

    fn fingerprint(&self) -> String {
        (**self).fingerprint()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertaintyMetric {
    /// Median over draws of the predicted class's probability.
    #[default]
    Median,
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertaintyConfig {
    pub mc_samples: usize,
    pub seed: u64,
    pub metric: CertaintyMetric,
    /// Keep the full `mc_samples x 10` probability table per example.
    pub retain_draws: bool,
}

impl CertaintyConfig {
    pub fn new(mc_samples: usize, seed: u64) -> Self {
        Self { mc_samples, seed, metric: CertaintyMetric::Median, retain_draws: false }
    }

    pub fn retaining_draws(self) -> Self {
        Self { retain_draws: true, ..self }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertaintyPrediction {
    pub label: u8,
    pub certainty: f32,
    pub per_class_mean_logits: [f32; NUM_CLASSES],
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_draw_probs: Option<Vec<[f32; NUM_CLASSES]>>,
}

impl CertaintyPrediction {
    /// Certainty assigned to an arbitrary class; needs retained draws.
    pub fn class_certainty(&self, class: usize, metric: CertaintyMetric) -> Option<f32> {
        let draws = self.per_draw_probs.as_ref()?;
        let mut v: Vec<f32> = draws.iter().map(|p| p[class]).collect();
        Some(aggregate(&mut v, metric))
    }
}

pub fn median(values: &mut [f32]) -> f32 {
    assert!(!values.is_empty(), "median of an empty list");
    values.sort_by(f32::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn aggregate(values: &mut [f32], metric: CertaintyMetric) -> f32 {
    match metric {
        CertaintyMetric::Median => median(values),
        CertaintyMetric::Mean => values.iter().sum::<f32>() / values.len() as f32,
    }
}

/// Index of the largest value, ties resolved toward the lowest index.
pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Certainty predictions for a batch whose first example has global index 0.
pub fn predict_with_certainty<C: CertaintyClassifier + ?Sized>(
    clf: &C,
    images: &[f32],
    cfg: &CertaintyConfig,
) -> Result<Vec<CertaintyPrediction>> {
    predict_with_certainty_at(clf, images, cfg, 0)
}

/// Certainty predictions for examples with global indices `first_index..`.
pub fn predict_with_certainty_at<C: CertaintyClassifier + ?Sized>(
    clf: &C,
    images: &[f32],
    cfg: &CertaintyConfig,
    first_index: usize,
) -> Result<Vec<CertaintyPrediction>> {
    let keys: Vec<u64> = (first_index as u64..).take(images.len() / IMAGE_PIXELS).collect();
    predict_with_certainty_keyed(clf, images, cfg, &keys)
}

pub fn predict_with_certainty_keyed<C: CertaintyClassifier + ?Sized>(
    clf: &C,
    images: &[f32],
    cfg: &CertaintyConfig,
    keys: &[u64],
) -> Result<Vec<CertaintyPrediction>> {
    if !clf.is_trained() {
        return Err(GwinError::UntrainedClassifier);
    }
    if cfg.mc_samples == 0 {
        return Err(GwinError::InvalidConfig("mc_samples must be at least 1".into()));
    }
    if !images.len().is_multiple_of(IMAGE_PIXELS) {
        return Err(GwinError::ShapeMismatch(format!("{} pixels is not a whole number of images", images.len())));
    }
    let n = images.len() / IMAGE_PIXELS;
    if keys.len() != n {
        return Err(GwinError::ShapeMismatch(format!("{n} images but {} keys", keys.len())));
    }
    let draws = cfg.mc_samples;
    let mut logit_sum = vec![0.0f32; n * NUM_CLASSES];
    let mut probs = Vec::with_capacity(draws);
    for d in 0..draws {
        let mut l = clf.draw_logits(images, cfg.seed, d, keys);
        assert_eq!(l.len(), n * NUM_CLASSES, "classifier returned the wrong number of logits");
        logit_sum.iter_mut().zip(&l).for_each(|(s, v)| *s += v);
        softmax_rows(&mut l, NUM_CLASSES);
        probs.push(l);
    }
    Ok((0..n)
        .map(|i| {
            let mut mean = [0.0; NUM_CLASSES];
            for (m, s) in mean.iter_mut().zip(&logit_sum[i * NUM_CLASSES..(i + 1) * NUM_CLASSES]) {
                *m = s / draws as f32;
            }
            let label = argmax(&mean);
            let mut own: Vec<f32> = probs.iter().map(|p| p[i * NUM_CLASSES + label]).collect();
            let certainty = aggregate(&mut own, cfg.metric).clamp(0.0, 1.0);
            let per_draw_probs = cfg.retain_draws.then(|| {
                probs
                    .iter()
                    .map(|p| {
                        let mut row = [0.0; NUM_CLASSES];
                        row.copy_from_slice(&p[i * NUM_CLASSES..(i + 1) * NUM_CLASSES]);
                        row
                    })
                    .collect()
            });
            CertaintyPrediction { label: label as u8, certainty, per_class_mean_logits: mean, per_draw_probs }
        })
        .collect())
}

/// Mean negative log-likelihood of `labels` under draw 0 of `seed`.
pub fn classifier_nll<C: CertaintyClassifier + ?Sized>(clf: &C, images: &[f32], labels: &[u8], seed: u64) -> f32 {
    let logits = clf.draw_logits(images, seed, 0, &index_keys(labels.len()));
    let total: f64 =
        logits.chunks_exact(NUM_CLASSES).zip(labels).map(|(row, &y)| -log_softmax_at(row, y as usize) as f64).sum();
    (total / labels.len() as f64) as f32
}

/// Keys `0..n`.
pub fn index_keys(n: usize) -> Vec<u64> {
    (0..n as u64).collect()
}

/// Mean of `-ln p[y]` over rows of a probability table.
pub fn mean_nll_from_probs(probs: &[f32], labels: &[u8]) -> f32 {
    let total: f64 = probs.chunks_exact(NUM_CLASSES).zip(labels).map(|(p, &y)| -(p[y as usize] as f64).ln()).sum();
    (total / labels.len() as f64) as f32
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Logits are a fixed table plus a per-draw offset on class `draw % 10`.
    struct Table(Vec<f32>);

    impl CertaintyClassifier for Table {
        fn draw_logits(&self, images: &[f32], _seed: u64, draw: usize, _keys: &[u64]) -> Vec<f32> {
            let n = images.len() / IMAGE_PIXELS;
            let mut out: Vec<f32> = self.0.iter().cycle().take(n * NUM_CLASSES).copied().collect();
            for r in 0..n {
                out[r * NUM_CLASSES + draw % NUM_CLASSES] += 0.5;
            }
            out
        }
        fn is_trained(&self) -> bool {
            true
        }
        fn fingerprint(&self) -> String {
            "table".into()
        }
    }

    #[test]
    fn median_handles_odd_and_even_counts() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn ties_go_to_the_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 0.0]), 1);
    }

    #[test]
    fn single_draw_certainty_is_that_draws_probability() {
        let clf = Table(vec![0.0, 2.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let x = vec![0.0; IMAGE_PIXELS];
        let p = &predict_with_certainty(&clf, &x, &CertaintyConfig::new(1, 0)).unwrap()[0];
        let mut probs = clf.draw_logits(&x, 0, 0, &[0]);
        softmax_rows(&mut probs, NUM_CLASSES);
        assert_eq!(p.label as usize, argmax(&probs));
        assert_eq!(p.certainty, probs[p.label as usize]);
    }

    #[test]
    fn hand_built_probability_table_nll() {
        let mut probs = vec![0.0; 30];
        probs[2] = 0.5;
        probs[10 + 7] = 0.25;
        probs[20] = 1.0;
        let expected = (-(0.5f64).ln() - (0.25f64).ln() - 0.0) / 3.0;
        assert!((mean_nll_from_probs(&probs, &[2, 7, 0]) as f64 - expected).abs() < 1e-6);
    }

    #[test]
    fn uniform_logits_give_ln_ten() {
        struct Flat;
        impl CertaintyClassifier for Flat {
            fn draw_logits(&self, images: &[f32], _: u64, _: usize, _: &[u64]) -> Vec<f32> {
                vec![0.3; images.len() / IMAGE_PIXELS * NUM_CLASSES]
            }
            fn is_trained(&self) -> bool {
                true
            }
            fn fingerprint(&self) -> String {
                String::new()
            }
        }
        let x = vec![0.0; 4 * IMAGE_PIXELS];
        assert!((classifier_nll(&Flat, &x, &[0, 3, 5, 9], 1) - 10f32.ln()).abs() < 1e-6);
    }

    #[test]
    fn retained_draws_give_class_certainties() {
        let clf = Table(vec![0.0; NUM_CLASSES]);
        let x = vec![0.0; IMAGE_PIXELS];
        let cfg = CertaintyConfig::new(3, 0).retaining_draws();
        let p = &predict_with_certainty(&clf, &x, &cfg).unwrap()[0];
        assert_eq!(p.per_draw_probs.as_ref().unwrap().len(), 3);
        assert_eq!(p.class_certainty(p.label as usize, CertaintyMetric::Median), Some(p.certainty));
    }
}
