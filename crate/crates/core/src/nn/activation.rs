use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu(f32),
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: &mut [f32]) {
        match self {
            Activation::Identity => {}
            Activation::Relu => x.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::LeakyRelu(slope) => x.iter_mut().for_each(|v| {
                if *v < 0.0 {
                    *v *= slope
                }
            }),
            Activation::Sigmoid => x.iter_mut().for_each(|v| *v = sigmoid(*v)),
        }
    }

    /// Multiplies `grad` by the local derivative. `out` is the activation
    /// output; for piecewise-linear activations its sign equals the input's.
    pub fn backward(self, out: &[f32], grad: &mut [f32]) {
        debug_assert_eq!(out.len(), grad.len());
        match self {
            Activation::Identity => {}
            Activation::Relu => grad.iter_mut().zip(out).for_each(|(g, y)| {
                if *y <= 0.0 {
                    *g = 0.0
                }
            }),
            Activation::LeakyRelu(slope) => grad.iter_mut().zip(out).for_each(|(g, y)| {
                if *y < 0.0 {
                    *g *= slope
                }
            }),
            Activation::Sigmoid => grad.iter_mut().zip(out).for_each(|(g, y)| *g *= y * (1.0 - y)),
        }
    }

    /// Whether the derivative is piecewise constant, so that a tangent can be
    /// propagated with masks taken from the primal pass.
    pub fn is_piecewise_linear(self) -> bool {
        !matches!(self, Activation::Sigmoid)
    }
}

pub fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f32) -> f32 {
    if x > 20.0 {
        x
    } else if x < -20.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for positive arguments.
pub fn softplus_inverse(y: f32) -> f32 {
    assert!(y > 0.0);
    if y > 20.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

/// Row-wise softmax of a `rows x classes` matrix, in place.
pub fn softmax_rows(x: &mut [f32], classes: usize) {
    for row in x.chunks_exact_mut(classes) {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
}

/// Log of the softmax probability of `class` for one row of logits.
pub fn log_softmax_at(row: &[f32], class: usize) -> f32 {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let lse = row.iter().map(|v| ((v - max) as f64).exp()).sum::<f64>().ln() as f32 + max;
    row[class] - lse
}

/// Mean cross-entropy of integer labels under the given logits, and its
/// gradient with respect to the logits.
pub fn cross_entropy_with_grad(logits: &[f32], labels: &[u8], classes: usize) -> (f32, Vec<f32>) {
    let n = labels.len();
    assert_eq!(logits.len(), n * classes);
    let mut grad = logits.to_vec();
    softmax_rows(&mut grad, classes);
    let mut loss = 0.0f64;
    for (i, (row, &y)) in logits.chunks_exact(classes).zip(labels).enumerate() {
        loss -= log_softmax_at(row, y as usize) as f64;
        grad[i * classes + y as usize] -= 1.0;
    }
    let scale = 1.0 / n as f32;
    grad.iter_mut().for_each(|g| *g *= scale);
    ((loss / n as f64) as f32, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_round_trips() {
        for y in [1e-3f32, 0.0067, 0.5, 3.0, 25.0] {
            assert!((softplus(softplus_inverse(y)) - y).abs() / y < 1e-4);
        }
        assert!((softplus(-5.0) - (-5.0f32).exp()).abs() < 1e-4);
    }

    #[test]
    fn softmax_rows_normalise() {
        let mut x = vec![1.0, 2.0, 3.0, -50.0, 0.0, 50.0];
        softmax_rows(&mut x, 3);
        for row in x.chunks(3) {
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|p| *p >= 0.0));
        }
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let logits = vec![0.3, -1.2, 2.0, 0.1, 0.5, -0.7];
        let labels = [2u8, 0];
        let (_, g) = cross_entropy_with_grad(&logits, &labels, 3);
        let h = 1e-3;
        for i in 0..logits.len() {
            let mut p = logits.clone();
            p[i] += h;
            let mut m = logits.clone();
            m[i] -= h;
            let fd =
                (cross_entropy_with_grad(&p, &labels, 3).0 - cross_entropy_with_grad(&m, &labels, 3).0) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-3, "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn leaky_relu_backward_uses_slope_on_negative_side() {
        let act = Activation::LeakyRelu(0.2);
        let mut x = vec![-1.0, 2.0];
        act.apply(&mut x);
        assert_eq!(x, vec![-0.2, 2.0]);
        let mut g = vec![1.0, 1.0];
        act.backward(&x, &mut g);
        assert_eq!(g, vec![0.2, 1.0]);
    }
}
