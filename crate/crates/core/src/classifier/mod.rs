//! Bayesian convolutional classifier with Monte-Carlo certainty.

pub mod arch;
pub mod certainty;
pub mod flipout;
pub mod model;

pub use arch::{ArchitectureSpec, LayerSpec, Shape};
pub use certainty::{
    argmax, classifier_nll, index_keys, mean_nll_from_probs, median, predict_with_certainty, predict_with_certainty_at,
    predict_with_certainty_keyed, CertaintyClassifier, CertaintyConfig, CertaintyMetric, CertaintyPrediction,
    DifferentiableClassifier,
};
pub use model::{
    train_classifier, train_classifier_with, ClassifierModel, ClassifierTrainConfig, EpochReport, PriorSpec,
};
