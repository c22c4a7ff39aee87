#![allow(dead_code)]

use gwin_core::classifier::{CertaintyClassifier, DifferentiableClassifier};
use gwin_core::data::{LabeledImageSet, IMAGE_PIXELS, NUM_CLASSES};
use gwin_core::gwin::Transformer;
use gwin_core::nn::random::derive_seed;
use gwin_core::Result;
use std::cell::Cell;

/// Logit `k` is `gain * x[k]` plus a keyed uniform jitter in `[-jitter, jitter]`.
/// Counts calls and the number of images seen.
pub struct PixelClassifier {
    pub gain: f32,
    pub jitter: f32,
    pub calls: Cell<usize>,
    pub images_seen: Cell<usize>,
}

impl PixelClassifier {
    pub fn new(gain: f32, jitter: f32) -> Self {
        Self { gain, jitter, calls: Cell::new(0), images_seen: Cell::new(0) }
    }
}

fn unit(seed: u64, parts: &[u64]) -> f32 {
    (derive_seed(seed, parts) >> 40) as f32 / (1u64 << 24) as f32 * 2.0 - 1.0
}

impl CertaintyClassifier for PixelClassifier {
    fn draw_logits(&self, images: &[f32], seed: u64, draw: usize, keys: &[u64]) -> Vec<f32> {
        self.calls.set(self.calls.get() + 1);
        self.images_seen.set(self.images_seen.get() + keys.len());
        let mut out = Vec::with_capacity(keys.len() * NUM_CLASSES);
        for (img, &key) in images.chunks_exact(IMAGE_PIXELS).zip(keys) {
            for (k, &p) in img[..NUM_CLASSES].iter().enumerate() {
                out.push(self.gain * p + self.jitter * unit(seed, &[draw as u64, key, k as u64]));
            }
        }
        out
    }

    fn is_trained(&self) -> bool {
        true
    }

    fn fingerprint(&self) -> String {
        format!("pixel-{}-{}", self.gain, self.jitter)
    }
}

impl DifferentiableClassifier for PixelClassifier {
    fn nll_with_input_grad(&self, images: &[f32], labels: &[u8], seed: u64) -> (f32, Vec<f32>) {
        let n = labels.len();
        let keys: Vec<u64> = (0..n as u64).collect();
        let logits = self.draw_logits(images, seed, 0, &keys);
        let mut grad = vec![0.0; images.len()];
        let mut total = 0.0f64;
        for (i, row) in logits.chunks_exact(NUM_CLASSES).enumerate() {
            let m = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let z: f32 = row.iter().map(|v| (v - m).exp()).sum();
            let y = labels[i] as usize;
            total += (z.ln() + m - row[y]) as f64;
            for k in 0..NUM_CLASSES {
                let p = (row[k] - m).exp() / z;
                let t = if k == y { 1.0 } else { 0.0 };
                grad[i * IMAGE_PIXELS + k] = self.gain * (p - t) / n as f32;
            }
        }
        ((total / n as f64) as f32, grad)
    }
}

/// Writes a one-hot pattern for `class` into the first ten pixels.
pub struct PaintTransformer {
    pub class: usize,
    pub calls: Cell<usize>,
    pub images_seen: Cell<usize>,
}

impl PaintTransformer {
    pub fn new(class: usize) -> Self {
        Self { class, calls: Cell::new(0), images_seen: Cell::new(0) }
    }
}

impl Transformer for PaintTransformer {
    fn noise_dim(&self) -> usize {
        4
    }

    fn transform(&self, x: &[f32], z: &[f32]) -> Result<Vec<f32>> {
        let n = x.len() / IMAGE_PIXELS;
        assert_eq!(z.len(), n * 4);
        self.calls.set(self.calls.get() + 1);
        self.images_seen.set(self.images_seen.get() + n);
        let mut out = x.to_vec();
        for img in out.chunks_exact_mut(IMAGE_PIXELS) {
            for (k, p) in img[..NUM_CLASSES].iter_mut().enumerate() {
                *p = if k == self.class { 1.0 } else { 0.0 };
            }
        }
        Ok(out)
    }
}

/// `n` images whose first ten pixels encode a soft vote for `labels[i]`
/// with strength drawn from `strengths`.
pub fn vote_images(labels: &[u8], strengths: &[f32]) -> Vec<f32> {
    let mut images = vec![0.0; labels.len() * IMAGE_PIXELS];
    for (i, (&y, &s)) in labels.iter().zip(strengths.iter().cycle()).enumerate() {
        let img = &mut images[i * IMAGE_PIXELS..(i + 1) * IMAGE_PIXELS];
        img[y as usize] = s;
        img[(y as usize + 1) % NUM_CLASSES] = 0.5 * s;
    }
    images
}

pub fn vote_set(n: usize, seed: u64) -> LabeledImageSet {
    let labels: Vec<u8> = (0..n).map(|i| (derive_seed(seed, &[i as u64]) % 10) as u8).collect();
    let strengths: Vec<f32> = (0..n).map(|i| 0.5 * (1.0 + unit(seed, &[i as u64, 77]))).collect();
    LabeledImageSet::new("votes", vote_images(&labels, &strengths), labels).unwrap()
}
