use thiserror::Error;

#[derive(Debug, Error)]
pub enum GwinError {
    #[error("malformed IDX data: {0}")]
    MalformedIdx(String),
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("pixels are already normalized (max {max})")]
    AlreadyNormalized { max: f32 },
    #[error("raw pixel value {0} is not an integer in 0..=255")]
    InvalidPixel(f32),
    #[error("invalid label {0}; labels must lie in 0..=9")]
    InvalidLabel(u8),
    #[error("expected {expected} examples, found {found}")]
    WrongSize { expected: usize, found: usize },
    #[error("classifier has not been trained")]
    UntrainedClassifier,
    #[error("training diverged: {0}")]
    DivergedTraining(String),
    #[error("the confident subset is empty")]
    EmptyConfidentSubset,
    #[error("no examples are rejected at tau = {0}")]
    EmptyRejectedSubset(f32),
    #[error("{name} = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f32 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = GwinError> = std::result::Result<T, E>;
