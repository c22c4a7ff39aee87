use super::Critic;
use crate::data::IMAGE_PIXELS;
use crate::error::{GwinError, Result};

/// `eps_i * real_i + (1 - eps_i) * fake_i` per example.
pub fn interpolate(x_real: &[f32], x_fake: &[f32], eps: &[f32]) -> Result<Vec<f32>> {
    if x_real.len() != x_fake.len() || x_real.len() != eps.len() * IMAGE_PIXELS {
        return Err(GwinError::ShapeMismatch(format!(
            "interpolation of {} and {} pixels with {} weights",
            x_real.len(),
            x_fake.len(),
            eps.len()
        )));
    }
    if let Some(&e) = eps.iter().find(|e| !(0.0..=1.0).contains(*e)) {
        return Err(GwinError::OutOfRange { name: "eps", value: e });
    }
    Ok(x_real
        .chunks_exact(IMAGE_PIXELS)
        .zip(x_fake.chunks_exact(IMAGE_PIXELS))
        .zip(eps)
        .flat_map(|((r, f), &e)| r.iter().zip(f).map(move |(a, b)| e * a + (1.0 - e) * b))
        .collect())
}

/// Per-example L2 norms of a gradient batch.
pub fn gradient_norms(g: &[f32]) -> Vec<f32> {
    g.chunks_exact(IMAGE_PIXELS).map(|row| row.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt() as f32).collect()
}

/// Mean over the batch of `(||grad_x D(x_hat, y)|| - 1)^2`.
pub fn gradient_penalty<D: Critic + ?Sized>(
    critic: &D,
    x_real: &[f32],
    x_fake: &[f32],
    labels: &[u8],
    eps: &[f32],
) -> Result<f32> {
    let x_hat = interpolate(x_real, x_fake, eps)?;
    let g = critic.input_gradients(&x_hat, labels)?;
    let norms = gradient_norms(&g);
    Ok((norms.iter().map(|n| ((*n - 1.0) as f64).powi(2)).sum::<f64>() / norms.len() as f64) as f32)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `D(x, y) = c * sum(x)`.
    struct LinearProbe(f32);

    impl Critic for LinearProbe {
        fn scores(&self, x: &[f32], _: &[u8]) -> Result<Vec<f32>> {
            Ok(x.chunks_exact(IMAGE_PIXELS).map(|r| self.0 * r.iter().sum::<f32>()).collect())
        }
        fn input_gradients(&self, x: &[f32], _: &[u8]) -> Result<Vec<f32>> {
            Ok(vec![self.0; x.len()])
        }
    }

    #[test]
    fn linear_probe_penalty_is_analytic() {
        let real = vec![0.3; 2 * IMAGE_PIXELS];
        let fake = vec![0.6; 2 * IMAGE_PIXELS];
        let p0 = gradient_penalty(&LinearProbe(1.0 / 28.0), &real, &fake, &[1, 2], &[0.2, 0.9]).unwrap();
        assert!(p0.abs() < 1e-10);
        let c = 0.1f32;
        let p = gradient_penalty(&LinearProbe(c), &real, &fake, &[1, 2], &[0.2, 0.9]).unwrap();
        assert!((p - (c * 28.0 - 1.0).powi(2)).abs() < 1e-5);
    }

    #[test]
    fn eps_one_returns_the_real_batch() {
        let real: Vec<f32> = (0..IMAGE_PIXELS).map(|i| i as f32 / 784.0).collect();
        let fake = vec![0.5; IMAGE_PIXELS];
        assert_eq!(interpolate(&real, &fake, &[1.0]).unwrap(), real);
        assert!(interpolate(&real, &fake, &[1.5]).is_err());
    }
}
