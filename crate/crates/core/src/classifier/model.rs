use super::arch::{ArchitectureSpec, LayerSpec, Shape};
use super::certainty::index_keys;
use super::flipout::{FlipoutCache, FlipoutGrads, FlipoutKind, FlipoutLayer, FlipoutNoise};
use super::{CertaintyClassifier, DifferentiableClassifier};
use crate::data::{LabeledImageSet, IMAGE_PIXELS, NUM_CLASSES};
use crate::error::{GwinError, Result};
use crate::nn::activation::{cross_entropy_with_grad, softmax_rows};
use crate::nn::random::{derive_seed, seeded, SeededRng};
use crate::nn::{Activation, Adam, AdamConfig, ConvGeometry, Padding};
use crate::stopwatch::Stopwatch;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Initial posterior scale, `softplus(rho_0)`.
pub const INITIAL_POSTERIOR_SCALE: f32 = 0.006_737_947; // e^-5

/// Examples per forward pass when evaluating large batches.
const EVAL_CHUNK: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    /// Standard deviation of the zero-mean factorised normal weight prior.
    pub std: f32,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self { std: 1.0 }
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Layer {
    Flipout { layer: FlipoutLayer, activation: Activation, dropout: f32 },
    MaxPool { input: Shape, output: Shape, size: usize, stride: usize, pad_top: usize, pad_left: usize },
    Flatten,
}

enum LayerCache {
    Flipout { cache: FlipoutCache, out: Vec<f32>, mask: Option<Vec<f32>> },
    MaxPool { argmax: Vec<u32> },
    Flatten,
}

/// Per-layer weight perturbations for one stochastic forward pass.
/// `None` entries evaluate the posterior mean.
pub struct NetworkNoise(Vec<Option<FlipoutNoise>>);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierTrainConfig {
    pub epochs: usize,
    pub learning_rate: f32,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f32,
    pub beta2: f32,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        Self { epochs: 30, learning_rate: 1e-3, batch_size: 128, seed: 0, beta1: 0.9, beta2: 0.999 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_nll: f64,
    pub kl_per_example: f64,
    pub seconds: f64,
}

/// Stochastic-weight convolutional classifier.
#[derive(Clone, Debug)]
pub struct ClassifierModel {
    pub spec: ArchitectureSpec,
    pub prior: PriorSpec,
    pub(crate) layers: Vec<Layer>,
    pub epochs_trained: usize,
    pub optimizer: Option<Adam>,
}

impl ClassifierModel {
    pub fn new(spec: ArchitectureSpec, seed: u64) -> Result<Self> {
        let shapes = spec.output_shapes()?;
        let mut rng = seeded(derive_seed(seed, &[0x1a17]));
        let mut input = spec.input;
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (ls, &output) in spec.layers.iter().zip(&shapes) {
            let layer = match *ls {
                LayerSpec::Conv { kernel, stride, padding, filters, activation, dropout } => {
                    let geom = ConvGeometry::new(input.h, input.w, input.c, kernel, stride, padding);
                    let kind = FlipoutKind::Conv { geom, out_c: filters };
                    Layer::Flipout {
                        layer: FlipoutLayer::new(kind, INITIAL_POSTERIOR_SCALE, &mut rng),
                        activation,
                        dropout,
                    }
                }
                LayerSpec::Dense { units, activation, dropout } => {
                    let kind = FlipoutKind::Dense { in_dim: input.len(), out_dim: units };
                    Layer::Flipout {
                        layer: FlipoutLayer::new(kind, INITIAL_POSTERIOR_SCALE, &mut rng),
                        activation,
                        dropout,
                    }
                }
                LayerSpec::MaxPool { size, stride } => {
                    let g = ConvGeometry::new(input.h, input.w, input.c, size, stride, Padding::Same);
                    Layer::MaxPool { input, output, size, stride, pad_top: g.pad_top, pad_left: g.pad_left }
                }
                LayerSpec::Flatten => Layer::Flatten,
            };
            layers.push(layer);
            input = output;
        }
        Ok(Self { spec, prior: PriorSpec::default(), layers, epochs_trained: 0, optimizer: None })
    }

    pub fn flipout_layers(&self) -> impl Iterator<Item = &FlipoutLayer> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Flipout { layer, .. } => Some(layer),
            _ => None,
        })
    }

    pub fn flipout_layers_mut(&mut self) -> impl Iterator<Item = &mut FlipoutLayer> {
        self.layers.iter_mut().filter_map(|l| match l {
            Layer::Flipout { layer, .. } => Some(layer),
            _ => None,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.flipout_layers().map(|l| l.mu.len() * 2 + l.bias.len()).sum()
    }

    /// SHA-256 over every variational parameter, little-endian, in layer order.
    pub fn parameter_hash(&self) -> String {
        let mut h = Sha256::new();
        for l in self.flipout_layers() {
            for part in [&l.mu, &l.rho, &l.bias] {
                for v in part.iter() {
                    h.update(v.to_le_bytes());
                }
            }
        }
        hex::encode(h.finalize())
    }

    pub fn kl_divergence(&self) -> f64 {
        self.flipout_layers().map(|l| l.kl_divergence(self.prior.std)).sum()
    }

    /// Noise keyed by `(seed, draw, layer)` for the weights and by
    /// `(seed, draw, layer, keys[i])` for example `i`'s signs.
    pub fn keyed_noise(&self, keys: &[u64], seed: u64, draw: usize) -> NetworkNoise {
        let n = keys.len();
        NetworkNoise(
            self.layers
                .iter()
                .enumerate()
                .map(|(li, l)| match l {
                    Layer::Flipout { layer, .. } => {
                        let mut wrng = seeded(derive_seed(seed, &[draw as u64, li as u64]));
                        Some(layer.sample_noise(n, &mut wrng, |i| {
                            seeded(derive_seed(seed, &[draw as u64, li as u64, keys[i], 0x5167]))
                        }))
                    }
                    _ => None,
                })
                .collect(),
        )
    }

    pub fn mean_noise(&self) -> NetworkNoise {
        NetworkNoise(self.layers.iter().map(|_| None).collect())
    }

    fn training_noise(&self, n: usize, rng: &mut impl Rng) -> NetworkNoise {
        let base: u64 = rng.random();
        self.keyed_noise(&index_keys(n), base, 0)
    }

    fn forward(
        &self,
        x: &[f32],
        n: usize,
        noise: &NetworkNoise,
        mut dropout_rng: Option<&mut SeededRng>,
    ) -> (Vec<f32>, Vec<LayerCache>) {
        assert_eq!(x.len(), n * self.spec.input.len(), "classifier input has the wrong length");
        let mut h = x.to_vec();
        let mut caches = Vec::with_capacity(self.layers.len());
        for (layer, nz) in self.layers.iter().zip(&noise.0) {
            match layer {
                Layer::Flipout { layer, activation, dropout } => {
                    let (mut y, cache) = layer.forward(&h, n, nz.as_ref());
                    activation.apply(&mut y);
                    let out = y.clone();
                    let mask = match dropout_rng.as_deref_mut() {
                        Some(rng) if *dropout > 0.0 => {
                            let keep = 1.0 - dropout;
                            let mask: Vec<f32> = (0..y.len())
                                .map(|_| if rng.random::<f32>() < keep { 1.0 / keep } else { 0.0 })
                                .collect();
                            y.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                            Some(mask)
                        }
                        _ => None,
                    };
                    caches.push(LayerCache::Flipout { cache, out, mask });
                    h = y;
                }
                Layer::MaxPool { input, output, size, stride, pad_top, pad_left } => {
                    let (y, argmax) = max_pool(&h, n, *input, *output, *size, *stride, *pad_top, *pad_left);
                    caches.push(LayerCache::MaxPool { argmax });
                    h = y;
                }
                Layer::Flatten => caches.push(LayerCache::Flatten),
            }
        }
        (h, caches)
    }

    fn backward(
        &self,
        caches: &[LayerCache],
        noise: &NetworkNoise,
        d_logits: Vec<f32>,
        n: usize,
        mut grads: Option<&mut [FlipoutGrads]>,
        need_input_grad: bool,
    ) -> Option<Vec<f32>> {
        let mut g = d_logits;
        let mut flipout_index = self.flipout_layers().count();
        for (i, ((layer, cache), nz)) in self.layers.iter().zip(caches).zip(&noise.0).enumerate().rev() {
            let need_dx = need_input_grad || i > 0;
            match (layer, cache) {
                (Layer::Flipout { layer, activation, .. }, LayerCache::Flipout { cache, out, mask }) => {
                    flipout_index -= 1;
                    if let Some(m) = mask {
                        g.iter_mut().zip(m).for_each(|(v, m)| *v *= m);
                    }
                    activation.backward(out, &mut g);
                    let lg = grads.as_deref_mut().map(|gs| &mut gs[flipout_index]);
                    {
                        let dx = layer.backward(cache, &g, n, nz.as_ref(), lg, need_dx)?;
                        g = dx
                    }
                }
                (Layer::MaxPool { input, .. }, LayerCache::MaxPool { argmax }) => {
                    let mut dx = vec![0.0; n * input.len()];
                    for (gv, &src) in g.iter().zip(argmax) {
                        dx[src as usize] += gv;
                    }
                    g = dx;
                }
                (Layer::Flatten, LayerCache::Flatten) => {}
                _ => unreachable!("layer/cache mismatch"),
            }
        }
        need_input_grad.then_some(g)
    }

    /// Logits for `images` under the given noise, evaluated in chunks.
    pub fn logits_with_noise(&self, images: &[f32], noise: &NetworkNoise) -> Vec<f32> {
        let n = images.len() / IMAGE_PIXELS;
        self.forward(images, n, noise, None).0
    }

    /// Class probabilities with every weight at its posterior mean.
    pub fn mean_probabilities(&self, images: &[f32]) -> Vec<f32> {
        let mut out = Vec::with_capacity(images.len() / IMAGE_PIXELS * NUM_CLASSES);
        for chunk in images.chunks(EVAL_CHUNK * IMAGE_PIXELS) {
            let n = chunk.len() / IMAGE_PIXELS;
            let (mut p, _) = self.forward(chunk, n, &self.mean_noise(), None);
            softmax_rows(&mut p, NUM_CLASSES);
            out.extend(p);
        }
        out
    }

    /// Mean negative log-likelihood over `set` under one keyed draw plus the
    /// KL term scaled by the set size.
    pub fn negative_elbo(&self, set: &LabeledImageSet, seed: u64) -> f64 {
        let logits = self.draw_logits(&set.images, seed, 0, &index_keys(set.len()));
        let nll: f64 = logits
            .chunks_exact(NUM_CLASSES)
            .zip(&set.labels)
            .map(|(row, &y)| -crate::nn::activation::log_softmax_at(row, y as usize) as f64)
            .sum::<f64>()
            / set.len() as f64;
        nll + self.kl_divergence() / set.len() as f64
    }

    fn train_step(&mut self, x: &[f32], y: &[u8], dataset_size: usize, rng: &mut SeededRng) -> Result<(f64, f64)> {
        let n = y.len();
        let noise = self.training_noise(n, rng);
        let (logits, caches) = self.forward(x, n, &noise, Some(rng));
        let (nll, d_logits) = cross_entropy_with_grad(&logits, y, NUM_CLASSES);
        let mut grads: Vec<FlipoutGrads> = self.flipout_layers().map(|l| l.zero_grads()).collect();
        self.backward(&caches, &noise, d_logits, n, Some(&mut grads), false);
        let kl_scale = 1.0 / dataset_size as f32;
        for (l, g) in self.flipout_layers().zip(grads.iter_mut()) {
            l.accumulate_kl_grads(self.prior.std, kl_scale, g);
        }
        let kl = self.kl_divergence() / dataset_size as f64;
        let loss = nll as f64 + kl;
        if !loss.is_finite() || grads.iter().any(|g| g.mu.iter().chain(&g.rho).any(|v| !v.is_finite())) {
            return Err(GwinError::DivergedTraining(format!("classifier loss became {loss}")));
        }
        let mut opt = self.optimizer.take().expect("optimizer initialised before training");
        {
            let mut params: Vec<&mut [f32]> = Vec::new();
            for l in self.flipout_layers_mut() {
                params.push(&mut l.mu);
                params.push(&mut l.rho);
                params.push(&mut l.bias);
            }
            let g: Vec<&[f32]> = grads.iter().flat_map(|g| [&g.mu[..], &g.rho[..], &g.bias[..]]).collect();
            opt.step(&mut params, &g);
        }
        self.optimizer = Some(opt);
        Ok((loss, nll as f64))
    }

    /// Runs one epoch of minibatch ELBO training. Randomness is keyed by
    /// `(cfg.seed, epoch)`, so interrupted runs resume identically.
    pub fn train_epoch(&mut self, train: &LabeledImageSet, cfg: &ClassifierTrainConfig) -> Result<EpochReport> {
        if train.is_empty() {
            return Err(GwinError::InvalidConfig("empty training set".into()));
        }
        if cfg.batch_size == 0 {
            return Err(GwinError::InvalidConfig("batch size must be positive".into()));
        }
        if self.optimizer.is_none() {
            self.optimizer = Some(Adam::new(AdamConfig::new(cfg.learning_rate, cfg.beta1, cfg.beta2)));
        }
        let start = Stopwatch::start();
        let epoch = self.epochs_trained;
        let mut rng = seeded(derive_seed(cfg.seed, &[0xe90c, epoch as u64]));
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let (mut loss_sum, mut nll_sum) = (0.0, 0.0);
        for batch in order.chunks(cfg.batch_size) {
            let (x, y) = train.gather(batch);
            let (loss, nll) = self.train_step(&x, &y, train.len(), &mut rng)?;
            loss_sum += loss * batch.len() as f64;
            nll_sum += nll * batch.len() as f64;
        }
        self.epochs_trained += 1;
        let n = train.len() as f64;
        Ok(EpochReport {
            epoch: self.epochs_trained,
            mean_loss: loss_sum / n,
            mean_nll: nll_sum / n,
            kl_per_example: self.kl_divergence() / n,
            seconds: start.seconds(),
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn max_pool(
    x: &[f32],
    n: usize,
    input: Shape,
    output: Shape,
    size: usize,
    stride: usize,
    pad_top: usize,
    pad_left: usize,
) -> (Vec<f32>, Vec<u32>) {
    let c = input.c;
    let mut y = vec![0.0; n * output.len()];
    let mut arg = vec![0u32; n * output.len()];
    for b in 0..n {
        let base_in = b * input.len();
        for oh in 0..output.h {
            for ow in 0..output.w {
                let o = b * output.len() + (oh * output.w + ow) * c;
                for ch in 0..c {
                    let mut best = f32::NEG_INFINITY;
                    let mut best_at = 0;
                    for kh in 0..size {
                        let ih = (oh * stride + kh) as isize - pad_top as isize;
                        if ih < 0 || ih >= input.h as isize {
                            continue;
                        }
                        for kw in 0..size {
                            let iw = (ow * stride + kw) as isize - pad_left as isize;
                            if iw < 0 || iw >= input.w as isize {
                                continue;
                            }
                            let at = base_in + (ih as usize * input.w + iw as usize) * c + ch;
                            if x[at] > best {
                                best = x[at];
                                best_at = at;
                            }
                        }
                    }
                    y[o + ch] = best;
                    arg[o + ch] = best_at as u32;
                }
            }
        }
    }
    (y, arg)
}

/// Trains a fresh classifier for `cfg.epochs` epochs.
pub fn train_classifier(
    train: &LabeledImageSet,
    spec: ArchitectureSpec,
    cfg: &ClassifierTrainConfig,
) -> Result<ClassifierModel> {
    train_classifier_with(train, spec, cfg, |r| {
        log::info!(
            "epoch {} loss {:.4} nll {:.4} kl/N {:.4} ({:.1}s)",
            r.epoch,
            r.mean_loss,
            r.mean_nll,
            r.kl_per_example,
            r.seconds
        )
    })
}

pub fn train_classifier_with(
    train: &LabeledImageSet,
    spec: ArchitectureSpec,
    cfg: &ClassifierTrainConfig,
    mut on_epoch: impl FnMut(&EpochReport),
) -> Result<ClassifierModel> {
    if cfg.epochs == 0 {
        return Err(GwinError::InvalidConfig("epochs must be at least 1".into()));
    }
    train.check_normalized()?;
    let mut model = ClassifierModel::new(spec, cfg.seed)?;
    for _ in 0..cfg.epochs {
        let report = model.train_epoch(train, cfg)?;
        on_epoch(&report);
    }
    Ok(model)
}

impl CertaintyClassifier for ClassifierModel {
    fn draw_logits(&self, images: &[f32], seed: u64, draw: usize, keys: &[u64]) -> Vec<f32> {
        assert_eq!(keys.len() * IMAGE_PIXELS, images.len(), "one key per image");
        let mut out = Vec::with_capacity(keys.len() * NUM_CLASSES);
        for (chunk, ks) in images.chunks(EVAL_CHUNK * IMAGE_PIXELS).zip(keys.chunks(EVAL_CHUNK)) {
            let n = ks.len();
            let noise = self.keyed_noise(ks, seed, draw);
            out.extend(self.forward(chunk, n, &noise, None).0);
        }
        out
    }

    fn is_trained(&self) -> bool {
        self.epochs_trained > 0
    }

    fn fingerprint(&self) -> String {
        self.parameter_hash()
    }
}

impl DifferentiableClassifier for ClassifierModel {
    fn nll_with_input_grad(&self, images: &[f32], labels: &[u8], seed: u64) -> (f32, Vec<f32>) {
        let n = labels.len();
        assert_eq!(images.len(), n * IMAGE_PIXELS);
        let mut loss = 0.0f64;
        let mut grad = Vec::with_capacity(images.len());
        let keys = index_keys(n);
        for ((chunk, ys), ks) in
            images.chunks(EVAL_CHUNK * IMAGE_PIXELS).zip(labels.chunks(EVAL_CHUNK)).zip(keys.chunks(EVAL_CHUNK))
        {
            let m = ys.len();
            let noise = self.keyed_noise(ks, seed, 0);
            let (logits, caches) = self.forward(chunk, m, &noise, None);
            let (l, mut d) = cross_entropy_with_grad(&logits, ys, NUM_CLASSES);
            // Rescale the per-chunk mean to a mean over the whole batch.
            let w = m as f32 / n as f32;
            d.iter_mut().for_each(|v| *v *= w);
            loss += l as f64 * m as f64;
            grad.extend(self.backward(&caches, &noise, d, m, None, true).expect("input gradient requested"));
        }
        ((loss / n as f64) as f32, grad)
    }
}
