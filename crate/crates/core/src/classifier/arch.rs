//! Layer-list descriptions of the Bayesian classifier architectures.

use crate::data::{IMAGE_SIDE, NUM_CLASSES};
use crate::error::{GwinError, Result};
use crate::nn::{Activation, ConvGeometry, Padding};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Height x width x channels of a feature map. Flattened vectors are `1 x 1 x len`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Shape {
    pub const fn new(h: usize, w: usize, c: usize) -> Self {
        Self { h, w, c }
    }

    pub const fn flat(len: usize) -> Self {
        Self { h: 1, w: 1, c: len }
    }

    pub fn len(&self) -> usize {
        self.h * self.w * self.c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.h == 1 && self.w == 1 {
            write!(f, "{}", self.c)
        } else {
            write!(f, "{}x{}x{}", self.h, self.w, self.c)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Flipout convolution.
    Conv {
        kernel: usize,
        stride: usize,
        padding: Padding,
        filters: usize,
        activation: Activation,
        dropout: f32,
    },
    MaxPool {
        size: usize,
        stride: usize,
    },
    Flatten,
    /// Flipout dense layer.
    Dense {
        units: usize,
        activation: Activation,
        dropout: f32,
    },
}

impl LayerSpec {
    pub fn conv(kernel: usize, stride: usize, padding: Padding, filters: usize) -> Self {
        LayerSpec::Conv { kernel, stride, padding, filters, activation: Activation::Relu, dropout: 0.0 }
    }

    pub fn dense(units: usize, activation: Activation) -> Self {
        LayerSpec::Dense { units, activation, dropout: 0.0 }
    }

    pub fn with_dropout(mut self, rate: f32) -> Self {
        match &mut self {
            LayerSpec::Conv { dropout, .. } | LayerSpec::Dense { dropout, .. } => *dropout = rate,
            _ => panic!("dropout only applies to conv and dense layers"),
        }
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub name: String,
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
}

impl ArchitectureSpec {
    /// Bayesian LeNet-5: three 5x5 flipout convolutions with two max-pools,
    /// then two flipout dense layers.
    pub fn lenet5_bnn() -> Self {
        Self {
            name: "lenet5_bnn".into(),
            input: Shape::new(IMAGE_SIDE, IMAGE_SIDE, 1),
            layers: vec![
                LayerSpec::conv(5, 1, Padding::Same, 6),
                LayerSpec::MaxPool { size: 2, stride: 2 },
                LayerSpec::conv(5, 1, Padding::Same, 16),
                LayerSpec::MaxPool { size: 2, stride: 2 },
                LayerSpec::conv(5, 1, Padding::Same, 120),
                LayerSpec::Flatten,
                LayerSpec::dense(84, Activation::Relu),
                LayerSpec::dense(NUM_CLASSES, Activation::Identity),
            ],
        }
    }

    /// The stronger six-convolution baseline. Batch normalisation is not
    /// applied; dropout of 0.4 follows the strided convolutions and the hidden
    /// dense layer.
    pub fn improved_bnn() -> Self {
        Self::improved_bnn_with_dropout(0.4)
    }

    pub fn improved_bnn_with_dropout(rate: f32) -> Self {
        Self {
            name: "improved_bnn".into(),
            input: Shape::new(IMAGE_SIDE, IMAGE_SIDE, 1),
            layers: vec![
                LayerSpec::conv(3, 1, Padding::Valid, 32),
                LayerSpec::conv(3, 1, Padding::Valid, 32),
                LayerSpec::conv(5, 2, Padding::Same, 32).with_dropout(rate),
                LayerSpec::conv(3, 1, Padding::Valid, 64),
                LayerSpec::conv(3, 1, Padding::Valid, 64),
                LayerSpec::conv(5, 2, Padding::Same, 64).with_dropout(rate),
                LayerSpec::Flatten,
                LayerSpec::dense(128, Activation::Relu).with_dropout(rate),
                LayerSpec::dense(NUM_CLASSES, Activation::Identity),
            ],
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "lenet5_bnn" => Ok(Self::lenet5_bnn()),
            "improved_bnn" => Ok(Self::improved_bnn()),
            other => Err(GwinError::InvalidConfig(format!("unknown architecture `{other}`"))),
        }
    }

    /// Output shape after every layer, validating the layer list on the way.
    pub fn output_shapes(&self) -> Result<Vec<Shape>> {
        let mut shape = self.input;
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            shape = match *layer {
                LayerSpec::Conv { kernel, stride, padding, filters, dropout, .. } => {
                    check_dropout(i, dropout)?;
                    if shape.h == 1 && shape.w == 1 && i > 0 {
                        return Err(invalid(i, "convolution after flatten"));
                    }
                    if padding == Padding::Valid && (shape.h < kernel || shape.w < kernel) {
                        return Err(invalid(i, "valid convolution larger than its input"));
                    }
                    let g = ConvGeometry::new(shape.h, shape.w, shape.c, kernel, stride, padding);
                    Shape::new(g.out_h, g.out_w, filters)
                }
                LayerSpec::MaxPool { size, stride } => {
                    if size == 0 || stride == 0 {
                        return Err(invalid(i, "pool size and stride must be positive"));
                    }
                    Shape::new(shape.h.div_ceil(stride), shape.w.div_ceil(stride), shape.c)
                }
                LayerSpec::Flatten => Shape::flat(shape.len()),
                LayerSpec::Dense { units, dropout, .. } => {
                    check_dropout(i, dropout)?;
                    if !(shape.h == 1 && shape.w == 1) {
                        return Err(invalid(i, "dense layer needs a flattened input"));
                    }
                    Shape::flat(units)
                }
            };
            shapes.push(shape);
        }
        match self.layers.last() {
            Some(LayerSpec::Dense { units, activation: Activation::Identity, .. }) if *units == NUM_CLASSES => {}
            _ => {
                return Err(GwinError::InvalidConfig(format!(
                    "{}: the last layer must be a linear dense layer with {NUM_CLASSES} units",
                    self.name
                )))
            }
        }
        Ok(shapes)
    }
}

fn check_dropout(i: usize, rate: f32) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(invalid(i, "dropout rate must lie in [0, 1)"))
    }
}

fn invalid(i: usize, msg: &str) -> GwinError {
    GwinError::InvalidConfig(format!("layer {i}: {msg}"))
}
