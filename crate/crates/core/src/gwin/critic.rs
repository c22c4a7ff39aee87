//! Label-conditioned convolutional critic.
//!
//! The one-hot label is appended as 10 constant planes to the input image
//! and to the output of every convolution.
//!
//! The gradient-penalty weight gradient is computed without a general
//! second-order engine. Leaky ReLU is piecewise linear, so with the primal
//! activation masks fixed the critic's input-gradient is linear in the
//! tangent direction. `d/dw [g . D'(x; u)]` therefore reduces to a tangent
//! forward pass of `u` through the masked network, combined with the
//! pre-activation deltas of the primal backward pass (see
//! [`ConditionalCritic::penalty_weight_grads`]).

use super::Critic;
use crate::data::{IMAGE_PIXELS, IMAGE_SIDE, NUM_CLASSES};
use crate::error::{GwinError, Result};
use crate::nn::conv::im2col;
use crate::nn::gemm::{accumulate_at_b, matmul};
use crate::nn::random::{derive_seed, seeded};
use crate::nn::{Activation, Conv2d, ConvGeometry, LayerGrads, Linear, Padding};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticSpec {
    pub channels: [usize; 3],
    pub leaky_slope: f32,
}

impl CriticSpec {
    pub fn standard() -> Self {
        Self { channels: [64, 128, 256], leaky_slope: 0.2 }
    }
}

#[derive(Clone, Debug)]
pub struct ConditionalCritic {
    pub spec: CriticSpec,
    pub(crate) convs: Vec<Conv2d>,
    pub(crate) head: Linear,
}

pub struct CriticCache {
    n: usize,
    cols: Vec<Vec<f32>>,
    /// Post-activation conv outputs; their signs give the leaky-ReLU masks.
    outs: Vec<Vec<f32>>,
    flat: Vec<f32>,
}

#[derive(Clone, Debug)]
pub struct CriticGrads(pub Vec<LayerGrads>);

impl CriticGrads {
    pub fn groups(&self) -> Vec<&[f32]> {
        self.0.iter().flat_map(|g| [&g.weight[..], &g.bias[..]]).collect()
    }

    pub fn add_scaled(&mut self, other: &CriticGrads, s: f32) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.weight.iter_mut().zip(&b.weight).for_each(|(x, y)| *x += s * y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += s * y);
        }
    }
}

/// Appends one-hot label planes to an `n x positions x c` map.
fn concat_labels(h: &[f32], n: usize, positions: usize, c: usize, labels: Option<&[u8]>) -> Vec<f32> {
    let cc = c + NUM_CLASSES;
    let mut out = vec![0.0; n * positions * cc];
    for b in 0..n {
        for p in 0..positions {
            let src = (b * positions + p) * c;
            let dst = (b * positions + p) * cc;
            out[dst..dst + c].copy_from_slice(&h[src..src + c]);
            if let Some(l) = labels {
                out[dst + c + l[b] as usize] = 1.0;
            }
        }
    }
    out
}

fn strip_labels(g: &[f32], n: usize, positions: usize, c: usize) -> Vec<f32> {
    let cc = c + NUM_CLASSES;
    let mut out = Vec::with_capacity(n * positions * c);
    for row in g.chunks_exact(cc).take(n * positions) {
        out.extend_from_slice(&row[..c]);
    }
    out
}

impl ConditionalCritic {
    pub fn new(spec: CriticSpec, seed: u64) -> Result<Self> {
        if spec.channels.contains(&0) {
            return Err(GwinError::InvalidConfig("critic channels must be positive".into()));
        }
        let mut rng = seeded(derive_seed(seed, &[0xc217]));
        let gain = 2.0 / (1.0 + spec.leaky_slope * spec.leaky_slope);
        let mut convs = Vec::with_capacity(3);
        let (mut side, mut c) = (IMAGE_SIDE, 1);
        for &filters in &spec.channels {
            let geom = ConvGeometry::new(side, side, c + NUM_CLASSES, 5, 2, Padding::Same);
            side = geom.out_h;
            convs.push(Conv2d::new(geom, filters, gain, &mut rng));
            c = filters;
        }
        let head = Linear::new(side * side * (c + NUM_CLASSES), 1, 1.0, &mut rng);
        Ok(Self { spec, convs, head })
    }

    fn activation(&self) -> Activation {
        Activation::LeakyRelu(self.spec.leaky_slope)
    }

    /// Width of the flattened head input.
    pub fn head_inputs(&self) -> usize {
        self.head.in_dim
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [f32]> {
        let mut out: Vec<&mut [f32]> = Vec::new();
        for c in &mut self.convs {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    pub fn parameters(&self) -> Vec<&[f32]> {
        let mut out: Vec<&[f32]> = Vec::new();
        for c in &self.convs {
            out.push(&c.weight);
            out.push(&c.bias);
        }
        out.push(&self.head.weight);
        out.push(&self.head.bias);
        out
    }

    pub fn zero_grads(&self) -> CriticGrads {
        let mut g: Vec<LayerGrads> = self.convs.iter().map(|c| c.zero_grads()).collect();
        g.push(self.head.zero_grads());
        CriticGrads(g)
    }

    fn check(&self, x: &[f32], labels: &[u8]) -> Result<usize> {
        let n = labels.len();
        if x.len() != n * IMAGE_PIXELS {
            return Err(GwinError::ShapeMismatch(format!("critic got {} pixels for {n} labels", x.len())));
        }
        if let Some(&l) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(GwinError::InvalidLabel(l));
        }
        Ok(n)
    }

    pub fn forward_cached(&self, x: &[f32], labels: &[u8]) -> Result<(Vec<f32>, CriticCache)> {
        let n = self.check(x, labels)?;
        let mut h = x.to_vec();
        let mut c = 1;
        let mut positions = IMAGE_PIXELS;
        let mut cols_all = Vec::with_capacity(3);
        let mut outs = Vec::with_capacity(3);
        for conv in &self.convs {
            let input = concat_labels(&h, n, positions, c, Some(labels));
            let (mut y, cols) = conv.forward(&input, n, true);
            self.activation().apply(&mut y);
            cols_all.push(cols);
            outs.push(y.clone());
            h = y;
            c = conv.out_c;
            positions = conv.geom.out_positions();
        }
        let flat = concat_labels(&h, n, positions, c, Some(labels));
        let scores = self.head.forward(&flat, n);
        Ok((scores, CriticCache { n, cols: cols_all, outs, flat }))
    }

    /// Backpropagates `d_scores`. Returns the input gradient (image channel
    /// only) and the pre-activation delta of every convolution.
    pub fn backward(
        &self,
        cache: &CriticCache,
        d_scores: &[f32],
        mut grads: Option<&mut CriticGrads>,
    ) -> (Vec<f32>, Vec<Vec<f32>>) {
        let n = cache.n;
        let head_grads = grads.as_deref_mut().map(|g| &mut g.0[self.convs.len()]);
        let d_flat = self.head.backward(&cache.flat, d_scores, n, head_grads, true, true).unwrap();
        let last = self.convs.last().unwrap();
        let mut g = strip_labels(&d_flat, n, last.geom.out_positions(), last.out_c);
        let mut deltas = vec![Vec::new(); self.convs.len()];
        for (i, conv) in self.convs.iter().enumerate().rev() {
            self.activation().backward(&cache.outs[i], &mut g);
            let lg = grads.as_deref_mut().map(|gs| &mut gs.0[i]);
            let d_in = conv.backward(&cache.cols[i], &g, n, lg, true, true).unwrap();
            deltas[i] = std::mem::take(&mut g);
            g = strip_labels(&d_in, n, conv.geom.in_h * conv.geom.in_w, conv.geom.in_c - NUM_CLASSES);
        }
        (g, deltas)
    }

    /// Adds `d/dw sum_i D'(x_i; u_i)` to `grads`, where `D'(x; u)` is the
    /// directional derivative of the score along image-space tangent `u`,
    /// given the primal cache at `x` and the deltas from [`Self::backward`]
    /// run with unit score gradients.
    pub fn penalty_weight_grads(&self, cache: &CriticCache, deltas: &[Vec<f32>], u: &[f32], grads: &mut CriticGrads) {
        let n = cache.n;
        let mut t = u.to_vec();
        let mut c = 1;
        let mut positions = IMAGE_PIXELS;
        for (i, conv) in self.convs.iter().enumerate() {
            let t_in = concat_labels(&t, n, positions, c, None);
            let cols = im2col(&conv.geom, &t_in, n);
            let rows = n * conv.geom.out_positions();
            accumulate_at_b(rows, conv.geom.patch_len(), conv.out_c, &cols, &deltas[i], &mut grads.0[i].weight);
            let mut t_pre = matmul(rows, conv.geom.patch_len(), conv.out_c, &cols, &conv.weight);
            self.activation().backward(&cache.outs[i], &mut t_pre);
            t = t_pre;
            c = conv.out_c;
            positions = conv.geom.out_positions();
        }
        let t_flat = concat_labels(&t, n, positions, c, None);
        let ones = vec![1.0; n];
        accumulate_at_b(n, self.head.in_dim, 1, &t_flat, &ones, &mut grads.0[self.convs.len()].weight);
    }
}

impl Critic for ConditionalCritic {
    fn scores(&self, x: &[f32], labels: &[u8]) -> Result<Vec<f32>> {
        Ok(self.forward_cached(x, labels)?.0)
    }

    fn input_gradients(&self, x: &[f32], labels: &[u8]) -> Result<Vec<f32>> {
        let (_, cache) = self.forward_cached(x, labels)?;
        Ok(self.backward(&cache, &vec![1.0; labels.len()], None).0)
    }
}
