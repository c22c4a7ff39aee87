use super::critic::{ConditionalCritic, CriticGrads, CriticSpec};
use super::generator::{Generator, GeneratorGrads, GeneratorSpec};
use super::penalty::{gradient_norms, interpolate};
use crate::checkpoint::{adam_metadata, push_adam, read_adam, Checkpoint};
use crate::classifier::DifferentiableClassifier;
use crate::data::{ConfidentSubset, LabeledImageSet};
use crate::error::{GwinError, Result};
use crate::nn::random::{derive_seed, fill_normal, seeded, SeededRng};
use crate::nn::{Adam, AdamConfig};
use crate::stopwatch::Stopwatch;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationUnit {
    /// `iterations` counts generator updates, each preceded by `n_critic` critic updates.
    GeneratorSteps,
    /// `iterations` counts critic and generator updates together.
    TotalUpdates,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GwinTrainConfig {
    pub lambda_gp: f32,
    pub lambda_loss: f32,
    pub n_critic: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub tau_star: f32,
    pub iterations: usize,
    pub iteration_unit: IterationUnit,
    pub seed: u64,
    pub checkpoint_every: usize,
    pub log_every: usize,
}

impl Default for GwinTrainConfig {
    fn default() -> Self {
        Self {
            lambda_gp: 10.0,
            lambda_loss: 10.0,
            n_critic: 5,
            batch_size: 128,
            learning_rate: 1e-4,
            beta1: 0.5,
            beta2: 0.9,
            tau_star: 0.95,
            iterations: 200_000,
            iteration_unit: IterationUnit::GeneratorSteps,
            seed: 0,
            checkpoint_every: 5_000,
            log_every: 100,
        }
    }
}

impl GwinTrainConfig {
    pub fn generator_iterations(&self) -> usize {
        match self.iteration_unit {
            IterationUnit::GeneratorSteps => self.iterations,
            IterationUnit::TotalUpdates => self.iterations / (self.n_critic + 1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GwinError::InvalidConfig(m.into()));
        if self.batch_size == 0 || self.n_critic == 0 {
            return bad("batch_size and n_critic must be positive");
        }
        if self.checkpoint_every == 0 || self.log_every == 0 {
            return bad("checkpoint and log cadences must be positive");
        }
        if !(0.0..=1.0).contains(&self.tau_star) {
            return Err(GwinError::OutOfRange { name: "tau_star", value: self.tau_star });
        }
        if self.lambda_gp < 0.0 || self.lambda_loss < 0.0 || self.learning_rate <= 0.0 {
            return bad("penalty weights must be non-negative and the learning rate positive");
        }
        Ok(())
    }

    fn adam(&self) -> Adam {
        Adam::new(AdamConfig::new(self.learning_rate, self.beta1, self.beta2))
    }
}

/// Training data: the full set for the generator and confident indices into it for the critic.
#[derive(Clone, Copy, Debug)]
pub struct TrainingFeed<'a> {
    pub train: &'a LabeledImageSet,
    pub confident: &'a [usize],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CriticStepStats {
    pub loss: f32,
    /// `mean D(real) - mean D(fake)`
    pub wasserstein: f32,
    /// Unweighted gradient penalty.
    pub gp: f32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GeneratorStepStats {
    pub total: f32,
    /// `-mean D(G(x, z), y)`
    pub adversarial: f32,
    /// Classifier NLL of the generated batch.
    pub nll: f32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub critic_loss: f32,
    pub gen_loss: f32,
    pub gp_term: f32,
    pub penalty_term: f32,
    pub wasserstein: f32,
    pub wall_time: f64,
}

/// Hooks into the training loop. Batch hooks receive indices into the full training set.
pub trait TrainObserver {
    fn on_critic_batch(&mut self, _indices: &[usize]) {}

    fn on_generator_batch(&mut self, _indices: &[usize]) {}

    fn on_metrics(&mut self, _metrics: &IterationMetrics) {}

    fn on_checkpoint(&mut self, _trainer: &GwinTrainer) -> Result<()> {
        Ok(())
    }
}

pub struct NoopObserver;

impl TrainObserver for NoopObserver {}

/// Appends metrics as JSON lines and writes checkpoints into a directory.
pub struct MetricsLog {
    out: BufWriter<File>,
    checkpoint_dir: Option<PathBuf>,
}

impl MetricsLog {
    pub fn create(metrics_path: impl AsRef<Path>, checkpoint_dir: Option<PathBuf>) -> Result<Self> {
        if let Some(d) = &checkpoint_dir {
            std::fs::create_dir_all(d)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(metrics_path)?;
        Ok(Self { out: BufWriter::new(file), checkpoint_dir })
    }
}

impl TrainObserver for MetricsLog {
    fn on_metrics(&mut self, m: &IterationMetrics) {
        log::info!(
            "iter {} critic {:.4} gen {:.4} gp {:.4} penalty {:.4} w {:.4}",
            m.iteration,
            m.critic_loss,
            m.gen_loss,
            m.gp_term,
            m.penalty_term,
            m.wasserstein
        );
        let line = serde_json::to_string(m).expect("metrics serialize");
        if writeln!(self.out, "{line}").and_then(|_| self.out.flush()).is_err() {
            log::warn!("could not append to the metrics log");
        }
    }

    fn on_checkpoint(&mut self, trainer: &GwinTrainer) -> Result<()> {
        if let Some(dir) = &self.checkpoint_dir {
            let ckpt = trainer.to_checkpoint()?;
            ckpt.save(dir.join(format!("gwin-{:07}.ckpt", trainer.iteration)))?;
            ckpt.save(dir.join("gwin-latest.ckpt"))?;
        }
        Ok(())
    }
}

fn mean(v: &[f32]) -> f32 {
    (v.iter().map(|x| *x as f64).sum::<f64>() / v.len() as f64) as f32
}

/// Critic loss `mean D(fake) - mean D(real) + lambda_gp * GP` and its parameter gradient.
pub fn critic_loss_and_grads(
    critic: &ConditionalCritic,
    x_real: &[f32],
    x_fake: &[f32],
    labels: &[u8],
    eps: &[f32],
    lambda_gp: f32,
) -> Result<(CriticStepStats, CriticGrads)> {
    let m = labels.len();
    let mut grads = critic.zero_grads();

    let mut both = Vec::with_capacity(2 * x_real.len());
    both.extend_from_slice(x_real);
    both.extend_from_slice(x_fake);
    let both_labels: Vec<u8> = labels.iter().chain(labels).copied().collect();
    let (scores, cache) = critic.forward_cached(&both, &both_labels)?;
    let d: Vec<f32> = (0..2 * m).map(|i| if i < m { -1.0 } else { 1.0 } / m as f32).collect();
    critic.backward(&cache, &d, Some(&mut grads));
    drop(cache);
    let wasserstein = mean(&scores[..m]) - mean(&scores[m..]);

    let gp = if lambda_gp > 0.0 {
        let x_hat = interpolate(x_real, x_fake, eps)?;
        let (_, hat_cache) = critic.forward_cached(&x_hat, labels)?;
        let (g, deltas) = critic.backward(&hat_cache, &vec![1.0; m], None);
        let norms = gradient_norms(&g);
        let u: Vec<f32> = g
            .chunks_exact(g.len() / m)
            .zip(&norms)
            .flat_map(|(row, &nrm)| {
                let c = if nrm > 0.0 { lambda_gp * 2.0 * (nrm - 1.0) / nrm / m as f32 } else { 0.0 };
                row.iter().map(move |v| c * v)
            })
            .collect();
        critic.penalty_weight_grads(&hat_cache, &deltas, &u, &mut grads);
        mean(&norms.iter().map(|n| (n - 1.0) * (n - 1.0)).collect::<Vec<_>>())
    } else {
        0.0
    };
    Ok((CriticStepStats { loss: -wasserstein + lambda_gp * gp, wasserstein, gp }, grads))
}

/// Generator loss `-mean D(G(x, z), y) + lambda_loss * NLL(C(G(x, z)), y)` and its parameter gradient.
#[allow(clippy::too_many_arguments)]
pub fn generator_loss_and_grads<C: DifferentiableClassifier + ?Sized>(
    generator: &Generator,
    critic: &ConditionalCritic,
    clf: &C,
    x: &[f32],
    labels: &[u8],
    z: &[f32],
    clf_seed: u64,
    lambda_loss: f32,
) -> Result<(GeneratorStepStats, GeneratorGrads)> {
    let m = labels.len();
    let (fake, gen_cache) = generator.forward_cached(x, z, m)?;
    let (scores, critic_cache) = critic.forward_cached(&fake, labels)?;
    let (mut d, _) = critic.backward(&critic_cache, &vec![-1.0 / m as f32; m], None);
    let (nll, d_clf) = clf.nll_with_input_grad(&fake, labels, clf_seed);
    d.iter_mut().zip(&d_clf).for_each(|(a, b)| *a += lambda_loss * b);
    let mut grads = generator.zero_grads();
    generator.backward(&gen_cache, &d, m, &mut grads);
    let adversarial = -mean(&scores);
    Ok((GeneratorStepStats { total: adversarial + lambda_loss * nll, adversarial, nll }, grads))
}

fn sample_batch(rng: &mut SeededRng, pool: &[usize], m: usize) -> Vec<usize> {
    (0..m).map(|_| pool[rng.random_range(0..pool.len())]).collect()
}

fn check_finite(what: &str, values: &[f32]) -> Result<()> {
    match values.iter().find(|v| !v.is_finite()) {
        Some(v) => Err(GwinError::DivergedTraining(format!("{what} became {v}"))),
        None => Ok(()),
    }
}

/// Resumable state of one generator/critic training run.
#[derive(Clone, Debug)]
pub struct GwinTrainer {
    pub cfg: GwinTrainConfig,
    pub generator: Generator,
    pub critic: ConditionalCritic,
    pub generator_opt: Adam,
    pub critic_opt: Adam,
    /// Completed generator iterations.
    pub iteration: usize,
    /// Wall time spent in earlier sessions, in seconds.
    pub elapsed: f64,
}

pub const GWIN_KIND: &str = "gwin";

impl GwinTrainer {
    pub fn new(generator: GeneratorSpec, critic: CriticSpec, cfg: GwinTrainConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            generator: Generator::new(generator, derive_seed(cfg.seed, &[1]))?,
            critic: ConditionalCritic::new(critic, derive_seed(cfg.seed, &[2]))?,
            generator_opt: cfg.adam(),
            critic_opt: cfg.adam(),
            iteration: 0,
            elapsed: 0.0,
            cfg,
        })
    }

    fn stream(&self, k: usize) -> SeededRng {
        seeded(derive_seed(self.cfg.seed, &[0x57e9, self.iteration as u64, k as u64]))
    }

    /// One generator iteration preceded by `n_critic` critic updates.
    pub fn step<C: DifferentiableClassifier + ?Sized>(
        &mut self,
        feed: &TrainingFeed,
        clf: &C,
        obs: &mut dyn TrainObserver,
    ) -> Result<(CriticStepStats, GeneratorStepStats)> {
        if feed.confident.is_empty() {
            return Err(GwinError::EmptyConfidentSubset);
        }
        let m = self.cfg.batch_size;
        let nd = self.generator.spec.noise_dim;
        let mut critic_stats = None;
        for k in 0..self.cfg.n_critic {
            let mut rng = self.stream(k);
            let idx = sample_batch(&mut rng, feed.confident, m);
            obs.on_critic_batch(&idx);
            let (x, y) = feed.train.gather(&idx);
            let mut z = vec![0.0; m * nd];
            fill_normal(&mut rng, &mut z);
            let eps: Vec<f32> = (0..m).map(|_| rng.random::<f32>()).collect();
            let fake = self.generator.generate(&x, &z)?;
            let (stats, grads) = critic_loss_and_grads(&self.critic, &x, &fake, &y, &eps, self.cfg.lambda_gp)?;
            check_finite("critic loss", &[stats.loss])?;
            self.critic_opt.step(&mut self.critic.parameters_mut(), &grads.groups());
            critic_stats = Some(stats);
        }
        let mut rng = self.stream(self.cfg.n_critic);
        let all: Vec<usize> = (0..feed.train.len()).collect();
        let idx = sample_batch(&mut rng, &all, m);
        obs.on_generator_batch(&idx);
        let (x, y) = feed.train.gather(&idx);
        let mut z = vec![0.0; m * nd];
        fill_normal(&mut rng, &mut z);
        let clf_seed: u64 = rng.random();
        let (gstats, grads) =
            generator_loss_and_grads(&self.generator, &self.critic, clf, &x, &y, &z, clf_seed, self.cfg.lambda_loss)?;
        check_finite("generator loss", &[gstats.total])?;
        self.generator_opt.step(&mut self.generator.parameters_mut(), &grads.groups());
        self.iteration += 1;
        Ok((critic_stats.expect("n_critic is positive"), gstats))
    }

    /// Trains until `cfg.generator_iterations()` iterations are complete,
    /// reporting metrics and checkpoints at the configured cadences.
    pub fn run<C: DifferentiableClassifier + ?Sized>(
        &mut self,
        feed: &TrainingFeed,
        clf: &C,
        obs: &mut dyn TrainObserver,
    ) -> Result<()> {
        let target = self.cfg.generator_iterations();
        let start = Stopwatch::start();
        let base = self.elapsed;
        while self.iteration < target {
            let (c, g) = self.step(feed, clf, obs)?;
            self.elapsed = base + start.seconds();
            let done = self.iteration == target;
            if self.iteration.is_multiple_of(self.cfg.log_every) || done {
                obs.on_metrics(&IterationMetrics {
                    iteration: self.iteration,
                    critic_loss: c.loss,
                    gen_loss: g.total,
                    gp_term: self.cfg.lambda_gp * c.gp,
                    penalty_term: self.cfg.lambda_loss * g.nll,
                    wasserstein: c.wasserstein,
                    wall_time: self.elapsed,
                });
            }
            if self.iteration.is_multiple_of(self.cfg.checkpoint_every) || done {
                obs.on_checkpoint(self)?;
            }
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let arch = json!({ "generator": self.generator.spec, "critic": self.critic.spec });
        let mut ckpt = Checkpoint::new(GWIN_KIND, arch, Value::Null);
        for (i, p) in self.generator.parameters().iter().enumerate() {
            ckpt.push(format!("g.{i}"), &[p.len()], p);
        }
        for (i, p) in self.critic.parameters().iter().enumerate() {
            ckpt.push(format!("d.{i}"), &[p.len()], p);
        }
        push_adam(&mut ckpt, "g_adam", &self.generator_opt);
        push_adam(&mut ckpt, "d_adam", &self.critic_opt);
        ckpt.metadata = json!({
            "iteration": self.iteration,
            "elapsed": self.elapsed,
            "config": self.cfg,
            "g_adam": adam_metadata(&self.generator_opt),
            "d_adam": adam_metadata(&self.critic_opt),
        });
        Ok(ckpt)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.expect_kind(GWIN_KIND)?;
        let generator = Generator::from_checkpoint(ckpt)?;
        let cspec: CriticSpec = serde_json::from_value(ckpt.architecture["critic"].clone())?;
        let mut critic = ConditionalCritic::new(cspec, 0)?;
        for (i, p) in critic.parameters_mut().into_iter().enumerate() {
            ckpt.read_into(&format!("d.{i}"), p)?;
        }
        let meta = &ckpt.metadata;
        Ok(Self {
            cfg: serde_json::from_value(meta["config"].clone())?,
            generator,
            critic,
            generator_opt: read_adam(ckpt, "g_adam", &meta["g_adam"])?,
            critic_opt: read_adam(ckpt, "d_adam", &meta["d_adam"])?,
            iteration: meta["iteration"].as_u64().unwrap_or(0) as usize,
            elapsed: meta["elapsed"].as_f64().unwrap_or(0.0),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

impl Generator {
    /// Reads the generator half of a training checkpoint.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.expect_kind(GWIN_KIND)?;
        let spec: GeneratorSpec = serde_json::from_value(ckpt.architecture["generator"].clone())?;
        let mut g = Generator::new(spec, 0)?;
        for (i, p) in g.parameters_mut().into_iter().enumerate() {
            ckpt.read_into(&format!("g.{i}"), p)?;
        }
        Ok(g)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Validates the inputs and runs a fresh trainer to completion.
pub fn train_gwin<C: DifferentiableClassifier + ?Sized>(
    confident: &ConfidentSubset,
    full_train: &LabeledImageSet,
    clf: &C,
    generator: GeneratorSpec,
    critic: CriticSpec,
    cfg: GwinTrainConfig,
    obs: &mut dyn TrainObserver,
) -> Result<GwinTrainer> {
    if confident.is_empty() {
        return Err(GwinError::EmptyConfidentSubset);
    }
    if confident.base_len != full_train.len() {
        return Err(GwinError::WrongSize { expected: confident.base_len, found: full_train.len() });
    }
    if (confident.tau_star - cfg.tau_star).abs() > 1e-6 {
        return Err(GwinError::InvalidConfig(format!(
            "confident subset was built at tau* = {}, config asks for {}",
            confident.tau_star, cfg.tau_star
        )));
    }
    if clf.fingerprint() != confident.classifier_hash {
        return Err(GwinError::InvalidConfig("confident subset was built with a different classifier".into()));
    }
    let mut trainer = GwinTrainer::new(generator, critic, cfg)?;
    let feed = TrainingFeed { train: full_train, confident: &confident.member_indices };
    trainer.run(&feed, clf, obs)?;
    Ok(trainer)
}
