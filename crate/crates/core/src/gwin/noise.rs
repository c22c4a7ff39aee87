use crate::nn::random::{derive_seed, fill_normal, seeded};

/// `m x noise_dim` standard-normal batch, deterministic in `seed`.
pub fn sample_noise(m: usize, noise_dim: usize, seed: u64) -> Vec<f32> {
    let mut z = vec![0.0; m * noise_dim];
    fill_normal(&mut seeded(derive_seed(seed, &[0x2015e])), &mut z);
    z
}

/// One noise vector per key; row `i` depends only on `(seed, keys[i])`.
pub fn keyed_noise(keys: impl IntoIterator<Item = u64>, noise_dim: usize, seed: u64) -> Vec<f32> {
    let mut z = Vec::new();
    for k in keys {
        let start = z.len();
        z.resize(start + noise_dim, 0.0);
        fill_normal(&mut seeded(derive_seed(seed, &[0x2015e, k])), &mut z[start..]);
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_batch() {
        assert_eq!(sample_noise(4, 100, 11), sample_noise(4, 100, 11));
        assert_ne!(sample_noise(4, 100, 11), sample_noise(4, 100, 12));
    }

    #[test]
    fn moments_match_a_standard_normal() {
        let (m, d) = (10_000, 100);
        let z = sample_noise(m, d, 5);
        for j in 0..d {
            let col: Vec<f64> = (0..m).map(|i| z[i * d + j] as f64).collect();
            let mean = col.iter().sum::<f64>() / m as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
            assert!(mean.abs() < 4.0 / (m as f64).sqrt(), "coordinate {j} mean {mean}");
            assert!((var - 1.0).abs() < 0.1, "coordinate {j} variance {var}");
        }
    }

    #[test]
    fn keyed_rows_do_not_depend_on_batch_company() {
        let a = keyed_noise([3, 9, 4], 6, 1);
        let b = keyed_noise([9], 6, 1);
        assert_eq!(&a[6..12], b.as_slice());
    }
}
