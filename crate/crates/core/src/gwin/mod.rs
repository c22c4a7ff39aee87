//! Conditional Wasserstein generator and critic with gradient and
//! transformation penalties.

pub mod critic;
pub mod generator;
pub mod noise;
pub mod penalty;
pub mod train;

pub use critic::{ConditionalCritic, CriticGrads, CriticSpec};
pub use generator::{Generator, GeneratorGrads, GeneratorLayout, GeneratorSpec};
pub use noise::{keyed_noise, sample_noise};
pub use penalty::{gradient_penalty, interpolate};
pub use train::{
    critic_loss_and_grads, generator_loss_and_grads, train_gwin, CriticStepStats, GeneratorStepStats, GwinTrainConfig,
    GwinTrainer, IterationMetrics, IterationUnit, MetricsLog, NoopObserver, TrainObserver, TrainingFeed,
};

use crate::error::Result;

/// A critic scoring `(image, label)` pairs.
pub trait Critic {
    fn scores(&self, x: &[f32], labels: &[u8]) -> Result<Vec<f32>>;

    /// Per-example gradient of the score with respect to the image pixels.
    fn input_gradients(&self, x: &[f32], labels: &[u8]) -> Result<Vec<f32>>;
}

/// Maps a batch of images plus noise to a batch of images of the same shape.
pub trait Transformer {
    fn noise_dim(&self) -> usize;

    fn transform(&self, x: &[f32], z: &[f32]) -> Result<Vec<f32>>;
}

impl<T: Transformer + ?Sized> Transformer for &T {
    fn noise_dim(&self) -> usize {
        (**self).noise_dim()
    }

    fn transform(&self, x: &[f32], z: &[f32]) -> Result<Vec<f32>> {
        (**self).transform(x, z)
    }
}

/// Returns its input unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityTransformer {
    pub noise_dim: usize,
}

impl Transformer for IdentityTransformer {
    fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    fn transform(&self, x: &[f32], _z: &[f32]) -> Result<Vec<f32>> {
        Ok(x.to_vec())
    }
}
