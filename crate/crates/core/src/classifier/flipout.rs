//! Mean-field Gaussian layers trained with the Flipout estimator.
//!
//! A weight draw is `W = mu + sigma * eps` with `sigma = softplus(rho)`. One
//! `eps` is shared by the whole batch; each example decorrelates it with its
//! own Rademacher sign vectors on the input and output side:
//!
//! ```text
//! y = x mu + b + ((x * s_in) (sigma * eps)) * s_out
//! ```
//!
//! Convolutions use the same identity on im2col rows, with the input sign of
//! a patch column taken from its channel.

use crate::nn::activation::{sigmoid, softplus};
use crate::nn::conv::{col2im, im2col, ConvGeometry};
use crate::nn::gemm::{accumulate_at_b, accumulate_column_sums, add_row_bias, gemm, matmul, matmul_bt};
use crate::nn::random::{fan_in_normal, fill_normal, fill_signs};
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FlipoutKind {
    Dense { in_dim: usize, out_dim: usize },
    Conv { geom: ConvGeometry, out_c: usize },
}

#[derive(Clone, Debug)]
pub struct FlipoutLayer {
    pub kind: FlipoutKind,
    /// Posterior means, `fan_in x out`.
    pub mu: Vec<f32>,
    /// Unconstrained posterior scales; `sigma = softplus(rho)`.
    pub rho: Vec<f32>,
    /// Point-estimate bias.
    pub bias: Vec<f32>,
}

/// One weight perturbation plus per-example sign vectors.
#[derive(Clone, Debug)]
pub struct FlipoutNoise {
    pub eps: Vec<f32>,
    /// `sigma * eps`
    pub delta: Vec<f32>,
    /// `n x in_channels`
    pub sign_in: Vec<f32>,
    /// `n x out`
    pub sign_out: Vec<f32>,
}

#[derive(Clone, Debug, Default)]
pub struct FlipoutGrads {
    pub mu: Vec<f32>,
    pub rho: Vec<f32>,
    pub bias: Vec<f32>,
}

pub struct FlipoutCache {
    cols: Vec<f32>,
    signed_cols: Option<Vec<f32>>,
}

impl FlipoutLayer {
    pub fn new(kind: FlipoutKind, initial_scale: f32, rng: &mut impl Rng) -> Self {
        let (fan_in, out) = match kind {
            FlipoutKind::Dense { in_dim, out_dim } => (in_dim, out_dim),
            FlipoutKind::Conv { geom, out_c } => (geom.patch_len(), out_c),
        };
        let rho0 = crate::nn::activation::softplus_inverse(initial_scale);
        Self {
            kind,
            mu: fan_in_normal(rng, fan_in * out, fan_in, 2.0),
            rho: vec![rho0; fan_in * out],
            bias: vec![0.0; out],
        }
    }

    pub fn fan_in(&self) -> usize {
        match self.kind {
            FlipoutKind::Dense { in_dim, .. } => in_dim,
            FlipoutKind::Conv { geom, .. } => geom.patch_len(),
        }
    }

    pub fn out_channels(&self) -> usize {
        match self.kind {
            FlipoutKind::Dense { out_dim, .. } => out_dim,
            FlipoutKind::Conv { out_c, .. } => out_c,
        }
    }

    /// Period of the input sign pattern along a row of the lowered input.
    pub fn in_channels(&self) -> usize {
        match self.kind {
            FlipoutKind::Dense { in_dim, .. } => in_dim,
            FlipoutKind::Conv { geom, .. } => geom.in_c,
        }
    }

    /// Lowered rows per example.
    pub fn positions(&self) -> usize {
        match self.kind {
            FlipoutKind::Dense { .. } => 1,
            FlipoutKind::Conv { geom, .. } => geom.out_positions(),
        }
    }

    pub fn weight_count(&self) -> usize {
        self.mu.len()
    }

    pub fn sigma(&self) -> Vec<f32> {
        self.rho.iter().map(|r| softplus(*r)).collect()
    }

    pub fn zero_grads(&self) -> FlipoutGrads {
        FlipoutGrads { mu: vec![0.0; self.mu.len()], rho: vec![0.0; self.rho.len()], bias: vec![0.0; self.bias.len()] }
    }

    /// Draws `eps` from `weight_rng` and per-example signs from `sign_rng(i)`.
    pub fn sample_noise<R: Rng>(
        &self,
        n: usize,
        weight_rng: &mut impl Rng,
        mut sign_rng: impl FnMut(usize) -> R,
    ) -> FlipoutNoise {
        let mut eps = vec![0.0; self.weight_count()];
        fill_normal(weight_rng, &mut eps);
        let delta = self.rho.iter().zip(&eps).map(|(r, e)| softplus(*r) * e).collect();
        let (ci, co) = (self.in_channels(), self.out_channels());
        let mut sign_in = vec![0.0; n * ci];
        let mut sign_out = vec![0.0; n * co];
        for i in 0..n {
            let mut rng = sign_rng(i);
            fill_signs(&mut rng, &mut sign_in[i * ci..(i + 1) * ci]);
            fill_signs(&mut rng, &mut sign_out[i * co..(i + 1) * co]);
        }
        FlipoutNoise { eps, delta, sign_in, sign_out }
    }

    fn lower(&self, x: &[f32], n: usize) -> Vec<f32> {
        match self.kind {
            FlipoutKind::Dense { .. } => x.to_vec(),
            FlipoutKind::Conv { geom, .. } => im2col(&geom, x, n),
        }
    }

    fn sign_rows(&self, cols: &[f32], n: usize, sign_in: &[f32]) -> Vec<f32> {
        let (fan_in, ci, pos) = (self.fan_in(), self.in_channels(), self.positions());
        let mut out = cols.to_vec();
        for (r, row) in out.chunks_exact_mut(fan_in).enumerate() {
            let s = &sign_in[(r / pos) * ci..(r / pos + 1) * ci];
            for (j, v) in row.iter_mut().enumerate() {
                *v *= s[j % ci];
            }
        }
        debug_assert_eq!(out.len(), n * pos * fan_in);
        out
    }

    /// Pre-activation output. `noise = None` evaluates the posterior mean.
    pub fn forward(&self, x: &[f32], n: usize, noise: Option<&FlipoutNoise>) -> (Vec<f32>, FlipoutCache) {
        let (fan_in, out, pos) = (self.fan_in(), self.out_channels(), self.positions());
        let rows = n * pos;
        let cols = self.lower(x, n);
        let mut y = matmul(rows, fan_in, out, &cols, &self.mu);
        add_row_bias(&mut y, &self.bias);
        let signed_cols = noise.map(|nz| {
            let signed = self.sign_rows(&cols, n, &nz.sign_in);
            let p = matmul(rows, fan_in, out, &signed, &nz.delta);
            for (r, (yr, pr)) in y.chunks_exact_mut(out).zip(p.chunks_exact(out)).enumerate() {
                let s = &nz.sign_out[(r / pos) * out..(r / pos + 1) * out];
                for ((yv, pv), sv) in yr.iter_mut().zip(pr).zip(s) {
                    *yv += pv * sv;
                }
            }
            signed
        });
        (y, FlipoutCache { cols, signed_cols })
    }

    /// Back-propagates the pre-activation gradient `dy`.
    pub fn backward(
        &self,
        cache: &FlipoutCache,
        dy: &[f32],
        n: usize,
        noise: Option<&FlipoutNoise>,
        grads: Option<&mut FlipoutGrads>,
        need_dx: bool,
    ) -> Option<Vec<f32>> {
        let (fan_in, out, pos, ci) = (self.fan_in(), self.out_channels(), self.positions(), self.in_channels());
        let rows = n * pos;
        let dp = noise.map(|nz| {
            let mut dp = dy.to_vec();
            for (r, row) in dp.chunks_exact_mut(out).enumerate() {
                let s = &nz.sign_out[(r / pos) * out..(r / pos + 1) * out];
                row.iter_mut().zip(s).for_each(|(g, sv)| *g *= sv);
            }
            dp
        });
        if let Some(g) = grads {
            accumulate_column_sums(rows, out, dy, &mut g.bias);
            accumulate_at_b(rows, fan_in, out, &cache.cols, dy, &mut g.mu);
            if let (Some(nz), Some(dp), Some(signed)) = (noise, &dp, &cache.signed_cols) {
                let mut d_delta = vec![0.0; fan_in * out];
                accumulate_at_b(rows, fan_in, out, signed, dp, &mut d_delta);
                for (i, dd) in d_delta.iter().enumerate() {
                    g.rho[i] += dd * nz.eps[i] * sigmoid(self.rho[i]);
                }
            }
        }
        if !need_dx {
            return None;
        }
        let mut dcols = matmul_bt(rows, out, fan_in, dy, &self.mu);
        if let (Some(nz), Some(dp)) = (noise, &dp) {
            let mut pert = vec![0.0; rows * fan_in];
            gemm(false, true, rows, fan_in, out, 1.0, dp, &nz.delta, 0.0, &mut pert);
            for (r, (drow, prow)) in dcols.chunks_exact_mut(fan_in).zip(pert.chunks_exact(fan_in)).enumerate() {
                let s = &nz.sign_in[(r / pos) * ci..(r / pos + 1) * ci];
                for (j, (d, p)) in drow.iter_mut().zip(prow).enumerate() {
                    *d += p * s[j % ci];
                }
            }
        }
        Some(match self.kind {
            FlipoutKind::Dense { .. } => dcols,
            FlipoutKind::Conv { geom, .. } => col2im(&geom, &dcols, n),
        })
    }

    /// `KL(q(w) || N(0, prior_std^2))` summed over the weights.
    pub fn kl_divergence(&self, prior_std: f32) -> f64 {
        let pv = (prior_std as f64).powi(2);
        self.mu
            .iter()
            .zip(&self.rho)
            .map(|(&m, &r)| {
                let s = softplus(r) as f64;
                (prior_std as f64 / s).ln() + (s * s + (m as f64).powi(2)) / (2.0 * pv) - 0.5
            })
            .sum()
    }

    /// Adds `scale * dKL/d(mu, rho)` to `grads`.
    pub fn accumulate_kl_grads(&self, prior_std: f32, scale: f32, grads: &mut FlipoutGrads) {
        let pv = prior_std * prior_std;
        for i in 0..self.mu.len() {
            let s = softplus(self.rho[i]);
            grads.mu[i] += scale * self.mu[i] / pv;
            grads.rho[i] += scale * (s / pv - 1.0 / s) * sigmoid(self.rho[i]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::random::seeded;
    use crate::nn::Padding;

    fn loss(layer: &FlipoutLayer, x: &[f32], n: usize, noise: &FlipoutNoise, r: &[f32]) -> f64 {
        let (y, _) = layer.forward(x, n, Some(noise));
        y.iter().zip(r).map(|(a, b)| *a as f64 * *b as f64).sum()
    }

    fn refresh_delta(layer: &FlipoutLayer, noise: &mut FlipoutNoise) {
        noise.delta = layer.sigma().iter().zip(&noise.eps).map(|(s, e)| s * e).collect();
    }

    fn check_layer(kind: FlipoutKind, in_len: usize) {
        let mut rng = seeded(11);
        let mut layer = FlipoutLayer::new(kind, 0.3, &mut rng);
        layer.rho.iter_mut().enumerate().for_each(|(i, r)| *r += (i % 5) as f32 * 0.1);
        let n = 3;
        let x: Vec<f32> = (0..n * in_len).map(|i| ((i * 13 % 17) as f32 - 8.0) / 8.0).collect();
        let mut noise = layer.sample_noise(n, &mut seeded(5), |i| seeded(100 + i as u64));
        refresh_delta(&layer, &mut noise);
        let (y, cache) = layer.forward(&x, n, Some(&noise));
        let r: Vec<f32> = (0..y.len()).map(|i| ((i * 7 % 11) as f32 - 5.0) / 5.0).collect();
        let mut g = layer.zero_grads();
        let dx = layer.backward(&cache, &r, n, Some(&noise), Some(&mut g), true).unwrap();
        let h = 1e-2f32;
        for i in [0, 3, layer.mu.len() / 2, layer.mu.len() - 1] {
            let mut p = layer.clone();
            p.mu[i] += h;
            let mut m = layer.clone();
            m.mu[i] -= h;
            let fd = (loss(&p, &x, n, &noise, &r) - loss(&m, &x, n, &noise, &r)) / (2.0 * h as f64);
            assert!((fd - g.mu[i] as f64).abs() < 2e-3, "mu[{i}]: {fd} vs {}", g.mu[i]);

            let mut p = layer.clone();
            p.rho[i] += h;
            let mut np = noise.clone();
            refresh_delta(&p, &mut np);
            let mut m = layer.clone();
            m.rho[i] -= h;
            let mut nm = noise.clone();
            refresh_delta(&m, &mut nm);
            let fd = (loss(&p, &x, n, &np, &r) - loss(&m, &x, n, &nm, &r)) / (2.0 * h as f64);
            assert!((fd - g.rho[i] as f64).abs() < 2e-3, "rho[{i}]: {fd} vs {}", g.rho[i]);
        }
        for i in [0, 5, x.len() / 2, x.len() - 1] {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (loss(&layer, &xp, n, &noise, &r) - loss(&layer, &xm, n, &noise, &r)) / (2.0 * h as f64);
            assert!((fd - dx[i] as f64).abs() < 2e-3, "x[{i}]: {fd} vs {}", dx[i]);
        }
    }

    #[test]
    fn dense_flipout_gradients_match_finite_differences() {
        check_layer(FlipoutKind::Dense { in_dim: 6, out_dim: 4 }, 6);
    }

    #[test]
    fn conv_flipout_gradients_match_finite_differences() {
        let geom = ConvGeometry::new(5, 5, 2, 3, 1, Padding::Same);
        check_layer(FlipoutKind::Conv { geom, out_c: 3 }, geom.in_len());
    }

    #[test]
    fn kl_gradient_matches_finite_differences() {
        let mut layer = FlipoutLayer::new(FlipoutKind::Dense { in_dim: 3, out_dim: 2 }, 0.2, &mut seeded(4));
        layer.rho[2] = 0.7;
        let mut g = layer.zero_grads();
        layer.accumulate_kl_grads(1.0, 1.0, &mut g);
        let h = 1e-3;
        for i in 0..layer.mu.len() {
            let mut p = layer.clone();
            p.rho[i] += h;
            let mut m = layer.clone();
            m.rho[i] -= h;
            let fd = (p.kl_divergence(1.0) - m.kl_divergence(1.0)) / (2.0 * h as f64);
            assert!((fd - g.rho[i] as f64).abs() < 1e-2 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn kl_is_zero_at_the_prior() {
        let mut layer = FlipoutLayer::new(FlipoutKind::Dense { in_dim: 2, out_dim: 2 }, 1.0, &mut seeded(1));
        layer.mu.iter_mut().for_each(|m| *m = 0.0);
        assert!(layer.kl_divergence(1.0).abs() < 1e-5);
    }

    #[test]
    fn mean_forward_is_deterministic() {
        let layer = FlipoutLayer::new(FlipoutKind::Dense { in_dim: 4, out_dim: 3 }, 0.1, &mut seeded(9));
        let x = [0.1, 0.2, -0.3, 0.4];
        assert_eq!(layer.forward(&x, 1, None).0, layer.forward(&x, 1, None).0);
    }
}
