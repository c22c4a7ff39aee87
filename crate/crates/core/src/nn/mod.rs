//! Minimal tensor kernels: matrix products, convolution lowering, activations,
//! deterministic layers and the Adam optimiser.

pub mod activation;
pub mod adam;
pub mod conv;
pub mod gemm;
pub mod layers;
pub mod random;

pub use activation::Activation;
pub use adam::{Adam, AdamConfig};
pub use conv::{ConvGeometry, Padding};
pub use layers::{Conv2d, ConvTranspose2d, LayerGrads, Linear};
