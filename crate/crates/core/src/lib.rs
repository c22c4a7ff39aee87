//! Certainty-gated classification with a conditional Wasserstein generator
//! that transforms rejected inputs before relabeling.

pub mod checkpoint;
pub mod classifier;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod gwin;
pub mod nn;
pub mod pipeline;
pub mod rejection;
pub mod stopwatch;
pub mod synthetic;

pub use error::{GwinError, Result};
