//! Deterministic dense and convolutional layers with explicit backward passes.

use super::conv::{col2im, im2col, ConvGeometry};
use super::gemm::{accumulate_at_b, accumulate_column_sums, add_row_bias, matmul, matmul_bt};
use super::random::fan_in_normal;
use rand::Rng;

/// Weight and bias gradients for one layer.
#[derive(Clone, Debug, Default)]
pub struct LayerGrads {
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl LayerGrads {
    pub fn zeros(weight: usize, bias: usize) -> Self {
        Self { weight: vec![0.0; weight], bias: vec![0.0; bias] }
    }
}

/// `y = x W + b` with `W` stored `in_dim x out_dim`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Linear {
    pub fn new(in_dim: usize, out_dim: usize, gain: f32, rng: &mut impl Rng) -> Self {
        Self { in_dim, out_dim, weight: fan_in_normal(rng, in_dim * out_dim, in_dim, gain), bias: vec![0.0; out_dim] }
    }

    pub fn zero_grads(&self) -> LayerGrads {
        LayerGrads::zeros(self.weight.len(), self.bias.len())
    }

    pub fn forward(&self, x: &[f32], n: usize) -> Vec<f32> {
        let mut y = self.forward_no_bias(x, n);
        add_row_bias(&mut y, &self.bias);
        y
    }

    pub fn forward_no_bias(&self, x: &[f32], n: usize) -> Vec<f32> {
        matmul(n, self.in_dim, self.out_dim, x, &self.weight)
    }

    /// Accumulates parameter gradients (bias only when `with_bias`) and
    /// optionally returns the input gradient.
    pub fn backward(
        &self,
        x: &[f32],
        dy: &[f32],
        n: usize,
        grads: Option<&mut LayerGrads>,
        with_bias: bool,
        need_dx: bool,
    ) -> Option<Vec<f32>> {
        if let Some(g) = grads {
            accumulate_at_b(n, self.in_dim, self.out_dim, x, dy, &mut g.weight);
            if with_bias {
                accumulate_column_sums(n, self.out_dim, dy, &mut g.bias);
            }
        }
        need_dx.then(|| matmul_bt(n, self.out_dim, self.in_dim, dy, &self.weight))
    }
}

/// Square-kernel convolution with weights stored `patch_len x out_c`.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub geom: ConvGeometry,
    pub out_c: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Conv2d {
    pub fn new(geom: ConvGeometry, out_c: usize, gain: f32, rng: &mut impl Rng) -> Self {
        let fan_in = geom.patch_len();
        Self { geom, out_c, weight: fan_in_normal(rng, fan_in * out_c, fan_in, gain), bias: vec![0.0; out_c] }
    }

    pub fn zero_grads(&self) -> LayerGrads {
        LayerGrads::zeros(self.weight.len(), self.bias.len())
    }

    pub fn out_len(&self) -> usize {
        self.geom.out_positions() * self.out_c
    }

    /// Returns `(output, im2col columns)`; the columns feed [`Conv2d::backward`].
    pub fn forward(&self, x: &[f32], n: usize, with_bias: bool) -> (Vec<f32>, Vec<f32>) {
        let cols = im2col(&self.geom, x, n);
        let rows = n * self.geom.out_positions();
        let mut y = matmul(rows, self.geom.patch_len(), self.out_c, &cols, &self.weight);
        if with_bias {
            add_row_bias(&mut y, &self.bias);
        }
        (y, cols)
    }

    pub fn backward(
        &self,
        cols: &[f32],
        dy: &[f32],
        n: usize,
        grads: Option<&mut LayerGrads>,
        with_bias: bool,
        need_dx: bool,
    ) -> Option<Vec<f32>> {
        let rows = n * self.geom.out_positions();
        let patch = self.geom.patch_len();
        if let Some(g) = grads {
            accumulate_at_b(rows, patch, self.out_c, cols, dy, &mut g.weight);
            if with_bias {
                accumulate_column_sums(rows, self.out_c, dy, &mut g.bias);
            }
        }
        need_dx.then(|| {
            let dcols = matmul_bt(rows, self.out_c, patch, dy, &self.weight);
            col2im(&self.geom, &dcols, n)
        })
    }
}

/// Transposed convolution: the adjoint of the convolution described by
/// `geom`, mapping `(geom.out_h, geom.out_w, in_c)` to
/// `(geom.in_h, geom.in_w, geom.in_c)`. Weights are stored `patch_len x in_c`.
#[derive(Clone, Debug)]
pub struct ConvTranspose2d {
    pub geom: ConvGeometry,
    pub in_c: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl ConvTranspose2d {
    pub fn new(geom: ConvGeometry, in_c: usize, gain: f32, rng: &mut impl Rng) -> Self {
        // Each output pixel receives contributions from about
        // kernel^2 / stride^2 input positions across `in_c` channels.
        let fan_in = (geom.kernel * geom.kernel * in_c / (geom.stride * geom.stride)).max(1);
        Self {
            geom,
            in_c,
            weight: fan_in_normal(rng, geom.patch_len() * in_c, fan_in, gain),
            bias: vec![0.0; geom.in_c],
        }
    }

    pub fn out_c(&self) -> usize {
        self.geom.in_c
    }

    pub fn in_len(&self) -> usize {
        self.geom.out_positions() * self.in_c
    }

    pub fn out_len(&self) -> usize {
        self.geom.in_len()
    }

    pub fn zero_grads(&self) -> LayerGrads {
        LayerGrads::zeros(self.weight.len(), self.bias.len())
    }

    pub fn forward(&self, x: &[f32], n: usize) -> Vec<f32> {
        let rows = n * self.geom.out_positions();
        let cols = matmul_bt(rows, self.in_c, self.geom.patch_len(), x, &self.weight);
        let mut y = col2im(&self.geom, &cols, n);
        add_row_bias(&mut y, &self.bias);
        y
    }

    pub fn backward(
        &self,
        x: &[f32],
        dy: &[f32],
        n: usize,
        grads: Option<&mut LayerGrads>,
        need_dx: bool,
    ) -> Option<Vec<f32>> {
        let rows = n * self.geom.out_positions();
        let patch = self.geom.patch_len();
        let dcols = im2col(&self.geom, dy, n);
        if let Some(g) = grads {
            accumulate_at_b(rows, patch, self.in_c, &dcols, x, &mut g.weight);
            accumulate_column_sums(dy.len() / self.out_c(), self.out_c(), dy, &mut g.bias);
        }
        need_dx.then(|| matmul(rows, patch, self.in_c, &dcols, &self.weight))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::conv::Padding;
    use crate::nn::random::seeded;

    fn dot(a: &[f32], b: &[f32]) -> f64 {
        a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
    }

    fn probe(len: usize, salt: usize) -> Vec<f32> {
        (0..len).map(|i| (((i * 31 + salt * 17) % 29) as f32 - 14.0) / 14.0).collect()
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = seeded(1);
        let geom = ConvGeometry::new(5, 5, 2, 3, 2, Padding::Same);
        let conv = Conv2d::new(geom, 3, 2.0, &mut rng);
        let n = 2;
        let x = probe(n * geom.in_len(), 1);
        let r = probe(n * conv.out_len(), 2);
        let loss = |c: &Conv2d, x: &[f32]| dot(&c.forward(x, n, true).0, &r);
        let (_, cols) = conv.forward(&x, n, true);
        let mut g = conv.zero_grads();
        let dx = conv.backward(&cols, &r, n, Some(&mut g), true, true).unwrap();
        let h = 1e-2;
        for i in [0, 7, 19, 33] {
            let mut p = conv.clone();
            p.weight[i] += h;
            let mut m = conv.clone();
            m.weight[i] -= h;
            let fd = (loss(&p, &x) - loss(&m, &x)) / (2.0 * h as f64);
            assert!((fd - g.weight[i] as f64).abs() < 1e-3);
        }
        for i in [0, 11, 24, 49] {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (loss(&conv, &xp) - loss(&conv, &xm)) / (2.0 * h as f64);
            assert!((fd - dx[i] as f64).abs() < 1e-3);
        }
        let bias_sum: f32 = r.chunks(3).map(|c| c[1]).sum();
        assert!((g.bias[1] - bias_sum).abs() < 1e-4);
    }

    #[test]
    fn transpose_conv_is_adjoint_of_conv() {
        let mut rng = seeded(2);
        let geom = ConvGeometry::new(8, 8, 3, 5, 2, Padding::Same);
        let conv = Conv2d::new(geom, 4, 2.0, &mut rng);
        let mut tconv = ConvTranspose2d::new(geom, 4, 2.0, &mut rng);
        tconv.weight = conv.weight.clone();
        tconv.bias = vec![0.0; 3];
        let big = probe(geom.in_len(), 3);
        let small = probe(conv.out_len(), 4);
        let lhs = dot(&conv.forward(&big, 1, false).0, &small);
        let rhs = dot(&big, &tconv.forward(&small, 1));
        assert!((lhs - rhs).abs() < 1e-3, "{lhs} vs {rhs}");
    }

    #[test]
    fn transpose_conv_gradients_match_finite_differences() {
        let mut rng = seeded(3);
        let geom = ConvGeometry::new(6, 6, 2, 5, 2, Padding::Same);
        let t = ConvTranspose2d::new(geom, 3, 2.0, &mut rng);
        let n = 2;
        let x = probe(n * t.in_len(), 5);
        let r = probe(n * t.out_len(), 6);
        let loss = |l: &ConvTranspose2d, x: &[f32]| dot(&l.forward(x, n), &r);
        let mut g = t.zero_grads();
        let dx = t.backward(&x, &r, n, Some(&mut g), true).unwrap();
        let h = 1e-2;
        for i in [0, 5, 40, 100] {
            let mut p = t.clone();
            p.weight[i] += h;
            let mut m = t.clone();
            m.weight[i] -= h;
            let fd = (loss(&p, &x) - loss(&m, &x)) / (2.0 * h as f64);
            assert!((fd - g.weight[i] as f64).abs() < 1e-3);
        }
        for i in [0, 3, 17, 50] {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (loss(&t, &xp) - loss(&t, &xm)) / (2.0 * h as f64);
            assert!((fd - dx[i] as f64).abs() < 1e-3);
        }
    }

    #[test]
    fn linear_backward_matches_manual_product() {
        let lin = Linear { in_dim: 2, out_dim: 1, weight: vec![2.0, -1.0], bias: vec![0.5] };
        let x = [1.0, 3.0];
        assert_eq!(lin.forward(&x, 1), vec![-0.5]);
        let mut g = lin.zero_grads();
        let dx = lin.backward(&x, &[1.0], 1, Some(&mut g), true, true).unwrap();
        assert_eq!(g.weight, vec![1.0, 3.0]);
        assert_eq!(g.bias, vec![1.0]);
        assert_eq!(dx, vec![2.0, -1.0]);
    }
}
