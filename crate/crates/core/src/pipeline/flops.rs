//! Analytic forward-pass FLOP counts.
//!
//! Counting rules:
//! - a multiply-add is 2 FLOPs; bias additions are not counted
//! - dense: `2 * in * out`
//! - convolution: `2 * k * k * c_in * c_out * h_out * w_out`
//! - transposed convolution: the same product over the *input* positions,
//!   since every input pixel scatters one `k x k x c_out` patch
//! - activations (ReLU, leaky ReLU, sigmoid): 1 per element; identity is free
//! - max pooling: `size^2 - 1` comparisons per output element
//! - a Flipout layer costs two deterministic products (mean and
//!   perturbation), 3 per weight to form `softplus(rho) * eps`, 1 per input
//!   element for the input sign flip and 2 per output element for the output
//!   sign flip and the sum

use crate::classifier::{ArchitectureSpec, LayerSpec};
use crate::error::Result;
use crate::gwin::{GeneratorLayout, GeneratorSpec};
use crate::nn::Activation;
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LayerFlops {
    pub layer: String,
    pub flops: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FlopReport {
    pub model: String,
    pub layers: Vec<LayerFlops>,
    pub total: u64,
}

impl FlopReport {
    fn new(model: impl Into<String>, layers: Vec<LayerFlops>) -> Self {
        let total = layers.iter().map(|l| l.flops).sum();
        Self { model: model.into(), layers, total }
    }
}

pub fn dense_flops(inputs: usize, outputs: usize) -> u64 {
    2 * (inputs * outputs) as u64
}

pub fn conv_flops(kernel: usize, c_in: usize, c_out: usize, h_out: usize, w_out: usize) -> u64 {
    2 * (kernel * kernel * c_in * c_out * h_out * w_out) as u64
}

pub fn activation_flops(activation: Activation, elements: usize) -> u64 {
    match activation {
        Activation::Identity => 0,
        _ => elements as u64,
    }
}

fn flipout_flops(deterministic: u64, weights: usize, inputs: usize, outputs: usize) -> u64 {
    2 * deterministic + 3 * weights as u64 + inputs as u64 + 2 * outputs as u64
}

fn entry(layer: String, flops: u64) -> LayerFlops {
    LayerFlops { layer, flops }
}

/// One stochastic forward pass of a Flipout classifier.
pub fn classifier_flops(spec: &ArchitectureSpec) -> Result<FlopReport> {
    let shapes = spec.output_shapes()?;
    let mut input = spec.input;
    let mut layers = Vec::new();
    for (i, (ls, out)) in spec.layers.iter().zip(&shapes).enumerate() {
        match *ls {
            LayerSpec::Conv { kernel, filters, activation, .. } => {
                let det = conv_flops(kernel, input.c, filters, out.h, out.w);
                let weights = kernel * kernel * input.c * filters;
                layers.push(entry(
                    format!("{i}: conv {kernel}x{kernel} -> {out}"),
                    flipout_flops(det, weights, input.len(), out.len()),
                ));
                layers.push(entry(format!("{i}: activation"), activation_flops(activation, out.len())));
            }
            LayerSpec::Dense { units, activation, .. } => {
                let det = dense_flops(input.len(), units);
                layers.push(entry(
                    format!("{i}: dense -> {units}"),
                    flipout_flops(det, input.len() * units, input.len(), units),
                ));
                layers.push(entry(format!("{i}: activation"), activation_flops(activation, units)));
            }
            LayerSpec::MaxPool { size, .. } => {
                layers.push(entry(format!("{i}: max pool -> {out}"), ((size * size - 1) * out.len()) as u64));
            }
            LayerSpec::Flatten => {}
        }
        input = *out;
    }
    layers.retain(|l| l.flops > 0);
    Ok(FlopReport::new(spec.name.clone(), layers))
}

/// One forward pass of the generator.
pub fn generator_flops(spec: &GeneratorSpec) -> FlopReport {
    let mut layers = Vec::new();
    match spec.layout {
        GeneratorLayout::Conv { channels: [c0, c1, c2] } => {
            layers.push(entry(
                format!("dense {} -> {}", spec.input_len(), 16 * c0),
                dense_flops(spec.input_len(), 16 * c0),
            ));
            layers.push(entry("relu".into(), 16 * c0 as u64));
            // (input side, input channels, output side, output channels)
            let ups = [(4, c0, 8, c1), (7, c1, 14, c2), (14, c2, 28, 1)];
            for (k, &(side_in, c_in, side_out, c_out)) in ups.iter().enumerate() {
                layers.push(entry(
                    format!("conv transpose {side_in}x{side_in}x{c_in} -> {side_out}x{side_out}x{c_out}"),
                    conv_flops(5, c_in, c_out, side_in, side_in),
                ));
                let act = if k == 2 { "sigmoid" } else { "relu" };
                layers.push(entry(act.into(), (side_out * side_out * c_out) as u64));
            }
        }
        GeneratorLayout::Dense => {
            layers.push(entry("dense".into(), dense_flops(spec.input_len(), 784)));
            layers.push(entry("sigmoid".into(), 784));
        }
    }
    FlopReport::new("generator", layers)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_dense_layer_without_bias() {
        assert_eq!(dense_flops(100, 10), 2_000);
    }

    #[test]
    fn totals_are_stable() {
        assert_eq!(generator_flops(&GeneratorSpec::standard()).total, 54_179_344);
        assert_eq!(classifier_flops(&ArchitectureSpec::lenet5_bnn()).unwrap().total, 15_430_990);
    }
}
