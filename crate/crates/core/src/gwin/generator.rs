use super::Transformer;
use crate::data::{IMAGE_PIXELS, IMAGE_SIDE};
use crate::error::{GwinError, Result};
use crate::nn::random::{derive_seed, seeded};
use crate::nn::{Activation, ConvGeometry, ConvTranspose2d, LayerGrads, Linear, Padding};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "snake_case")]
pub enum GeneratorLayout {
    /// Dense to `4x4xc0`, then three 5x5 stride-2 transposed convolutions to
    /// `8x8xc1` (cropped to `7x7`), `14x14xc2` and `28x28x1`.
    Conv { channels: [usize; 3] },
    /// One dense layer straight to the 784 output pixels.
    Dense,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub noise_dim: usize,
    #[serde(flatten)]
    pub layout: GeneratorLayout,
}

impl GeneratorSpec {
    pub fn standard() -> Self {
        Self { noise_dim: 100, layout: GeneratorLayout::Conv { channels: [256, 128, 64] } }
    }

    pub fn input_len(&self) -> usize {
        IMAGE_PIXELS + self.noise_dim
    }
}

/// Conditional generator `G(x, z)` mapping an image and a noise vector to an image.
#[derive(Clone, Debug)]
pub struct Generator {
    pub spec: GeneratorSpec,
    pub(crate) dense: Linear,
    pub(crate) ups: Vec<ConvTranspose2d>,
}

pub struct GeneratorCache {
    input: Vec<f32>,
    dense_out: Vec<f32>,
    /// Input to each transposed convolution.
    up_in: Vec<Vec<f32>>,
    /// Post-activation output of each transposed convolution, before cropping.
    up_out: Vec<Vec<f32>>,
}

/// Gradients in the order of [`Generator::parameters_mut`].
#[derive(Clone, Debug)]
pub struct GeneratorGrads(pub Vec<LayerGrads>);

impl GeneratorGrads {
    pub fn groups(&self) -> Vec<&[f32]> {
        self.0.iter().flat_map(|g| [&g.weight[..], &g.bias[..]]).collect()
    }
}

const CROP_FROM: usize = 8;
const CROP_TO: usize = 7;

impl Generator {
    pub fn new(spec: GeneratorSpec, seed: u64) -> Result<Self> {
        if spec.noise_dim == 0 {
            return Err(GwinError::InvalidConfig("noise_dim must be positive".into()));
        }
        let mut rng = seeded(derive_seed(seed, &[0x6e4]));
        let (dense, ups) = match spec.layout {
            GeneratorLayout::Conv { channels: [c0, c1, c2] } => {
                if c0 * c1 * c2 == 0 {
                    return Err(GwinError::InvalidConfig("generator channels must be positive".into()));
                }
                let dense = Linear::new(spec.input_len(), 16 * c0, 2.0, &mut rng);
                let ups = vec![
                    ConvTranspose2d::new(
                        ConvGeometry::new(CROP_FROM, CROP_FROM, c1, 5, 2, Padding::Same),
                        c0,
                        2.0,
                        &mut rng,
                    ),
                    ConvTranspose2d::new(ConvGeometry::new(14, 14, c2, 5, 2, Padding::Same), c1, 2.0, &mut rng),
                    ConvTranspose2d::new(
                        ConvGeometry::new(IMAGE_SIDE, IMAGE_SIDE, 1, 5, 2, Padding::Same),
                        c2,
                        1.0,
                        &mut rng,
                    ),
                ];
                (dense, ups)
            }
            GeneratorLayout::Dense => (Linear::new(spec.input_len(), IMAGE_PIXELS, 1.0, &mut rng), Vec::new()),
        };
        Ok(Self { spec, dense, ups })
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [f32]> {
        let mut out: Vec<&mut [f32]> = vec![&mut self.dense.weight, &mut self.dense.bias];
        for u in &mut self.ups {
            out.push(&mut u.weight);
            out.push(&mut u.bias);
        }
        out
    }

    pub fn parameters(&self) -> Vec<&[f32]> {
        let mut out: Vec<&[f32]> = vec![&self.dense.weight, &self.dense.bias];
        for u in &self.ups {
            out.push(&u.weight);
            out.push(&u.bias);
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grads(&self) -> GeneratorGrads {
        let mut g = vec![self.dense.zero_grads()];
        g.extend(self.ups.iter().map(|u| u.zero_grads()));
        GeneratorGrads(g)
    }

    fn concat_input(&self, x: &[f32], z: &[f32], n: usize) -> Result<Vec<f32>> {
        let d = self.spec.noise_dim;
        if x.len() != n * IMAGE_PIXELS || z.len() != n * d {
            return Err(GwinError::ShapeMismatch(format!(
                "generator expects {n} images and {n}x{d} noise, got {} pixels and {} noise values",
                x.len(),
                z.len()
            )));
        }
        let mut input = Vec::with_capacity(n * self.spec.input_len());
        for i in 0..n {
            input.extend_from_slice(&x[i * IMAGE_PIXELS..(i + 1) * IMAGE_PIXELS]);
            input.extend_from_slice(&z[i * d..(i + 1) * d]);
        }
        Ok(input)
    }

    pub fn forward_cached(&self, x: &[f32], z: &[f32], n: usize) -> Result<(Vec<f32>, GeneratorCache)> {
        let input = self.concat_input(x, z, n)?;
        let mut h = self.dense.forward(&input, n);
        if self.ups.is_empty() {
            Activation::Sigmoid.apply(&mut h);
            let out = h.clone();
            return Ok((out, GeneratorCache { input, dense_out: h, up_in: Vec::new(), up_out: Vec::new() }));
        }
        Activation::Relu.apply(&mut h);
        let dense_out = h.clone();
        let mut up_in = Vec::with_capacity(3);
        let mut up_out = Vec::with_capacity(3);
        for (i, up) in self.ups.iter().enumerate() {
            let mut y = up.forward(&h, n);
            let last = i + 1 == self.ups.len();
            if last { Activation::Sigmoid } else { Activation::Relu }.apply(&mut y);
            up_in.push(std::mem::take(&mut h));
            h = if i == 0 { crop(&y, n, up.out_c()) } else { y.clone() };
            up_out.push(y);
        }
        Ok((h, GeneratorCache { input, dense_out, up_in, up_out }))
    }

    pub fn generate(&self, x: &[f32], z: &[f32]) -> Result<Vec<f32>> {
        let n = x.len() / IMAGE_PIXELS;
        Ok(self.forward_cached(x, z, n)?.0)
    }

    /// Accumulates parameter gradients for `d_out`, the loss gradient with
    /// respect to the generated images.
    pub fn backward(&self, cache: &GeneratorCache, d_out: &[f32], n: usize, grads: &mut GeneratorGrads) {
        let mut g = d_out.to_vec();
        if self.ups.is_empty() {
            Activation::Sigmoid.backward(&cache.dense_out, &mut g);
            self.dense.backward(&cache.input, &g, n, Some(&mut grads.0[0]), true, false);
            return;
        }
        for i in (0..self.ups.len()).rev() {
            let up = &self.ups[i];
            if i == 0 {
                g = uncrop(&g, n, up.out_c());
            }
            let last = i + 1 == self.ups.len();
            if last { Activation::Sigmoid } else { Activation::Relu }.backward(&cache.up_out[i], &mut g);
            g = up.backward(&cache.up_in[i], &g, n, Some(&mut grads.0[i + 1]), true).expect("input gradient requested");
        }
        Activation::Relu.backward(&cache.dense_out, &mut g);
        self.dense.backward(&cache.input, &g, n, Some(&mut grads.0[0]), true, false);
    }
}

impl Transformer for Generator {
    fn noise_dim(&self) -> usize {
        self.spec.noise_dim
    }

    fn transform(&self, x: &[f32], z: &[f32]) -> Result<Vec<f32>> {
        self.generate(x, z)
    }
}

/// Drops the last row and column of each `8x8xc` map.
fn crop(x: &[f32], n: usize, c: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(n * CROP_TO * CROP_TO * c);
    for b in 0..n {
        for r in 0..CROP_TO {
            let start = ((b * CROP_FROM + r) * CROP_FROM) * c;
            out.extend_from_slice(&x[start..start + CROP_TO * c]);
        }
    }
    out
}

fn uncrop(g: &[f32], n: usize, c: usize) -> Vec<f32> {
    let mut out = vec![0.0; n * CROP_FROM * CROP_FROM * c];
    for b in 0..n {
        for r in 0..CROP_TO {
            let dst = ((b * CROP_FROM + r) * CROP_FROM) * c;
            let src = ((b * CROP_TO + r) * CROP_TO) * c;
            out[dst..dst + CROP_TO * c].copy_from_slice(&g[src..src + CROP_TO * c]);
        }
    }
    out
}
