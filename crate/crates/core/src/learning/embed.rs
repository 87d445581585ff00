//! Random Fourier features approximating the RBF kernel
//! `k(x, y) = exp(−γ‖x − y‖²)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

/// `z(x) = sqrt(2/F)·cos(x Wᵀ + b)` with `W_ij ~ N(0, 2γ)` and
/// `b_j ~ U[0, 2π)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RbfSampler {
    input_dim: usize,
    features: usize,
    gamma: f64,
    weights: Vec<f64>,
    offsets: Vec<f64>,
}

impl RbfSampler {
    pub fn new(input_dim: usize, gamma: f64, features: usize, seed: u64) -> Self {
        assert!(features >= 1, "need at least one feature");
        assert!(gamma > 0.0, "kernel parameter must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, (2.0 * gamma).sqrt()).expect("finite std");
        let weights: Vec<f64> = (0..features * input_dim)
            .map(|_| normal.sample(&mut rng))
            .collect();
        let uni = Uniform::new(0.0, std::f64::consts::TAU).expect("valid range");
        let offsets: Vec<f64> = (0..features).map(|_| rng.sample(uni)).collect();
        Self {
            input_dim,
            features,
            gamma,
            weights,
            offsets,
        }
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Embeds row-major `rows × input_dim` data.
    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len() % self.input_dim, 0, "input width mismatch");
        let n = x.len() / self.input_dim;
        let scale = (2.0 / self.features as f64).sqrt();
        let mut out = vec![0.0; n * self.features];
        for (row, dst) in x
            .chunks_exact(self.input_dim)
            .zip(out.chunks_exact_mut(self.features))
        {
            for (j, o) in dst.iter_mut().enumerate() {
                let w = &self.weights[j * self.input_dim..(j + 1) * self.input_dim];
                let dot: f64 = row.iter().zip(w).map(|(a, b)| a * b).sum();
                *o = scale * (dot + self.offsets[j]).cos();
            }
        }
        out
    }
}

/// Convenience wrapper: fit with `seed` and transform `x`.
pub fn rbf_embed(x: &[f64], input_dim: usize, gamma: f64, features: usize, seed: u64) -> Vec<f64> {
    RbfSampler::new(input_dim, gamma, features, seed).transform(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_bound() {
        let x: Vec<f64> = (0..5 * 7).map(|i| (i as f64 * 0.13).sin()).collect();
        let z = rbf_embed(&x, 7, 0.5, 64, 1);
        assert_eq!(z.len(), 5 * 64);
        let bound = (2.0f64 / 64.0).sqrt();
        assert!(z.iter().all(|v| v.abs() <= bound + 1e-15));
    }

    #[test]
    fn deterministic_per_seed() {
        let x = vec![0.1, 0.2, 0.3];
        assert_eq!(rbf_embed(&x, 3, 1.0, 8, 4), rbf_embed(&x, 3, 1.0, 8, 4));
        assert_ne!(rbf_embed(&x, 3, 1.0, 8, 4), rbf_embed(&x, 3, 1.0, 8, 5));
    }

    #[test]
    fn inner_product_approximates_kernel() {
        let x = [0.2, -0.1, 0.4];
        let y = [0.5, 0.3, -0.2];
        let gamma = 1.3;
        let dist2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
        let kernel = (-gamma * dist2).exp();
        let seeds = 10_000;
        let mut acc = 0.0;
        let mut both = [0.0; 6];
        both[..3].copy_from_slice(&x);
        both[3..].copy_from_slice(&y);
        for s in 0..seeds {
            let z = rbf_embed(&both, 3, gamma, 2000, s);
            let (zx, zy) = z.split_at(2000);
            acc += zx.iter().zip(zy).map(|(a, b)| a * b).sum::<f64>();
        }
        let mean = acc / seeds as f64;
        assert!(
            (mean - kernel).abs() < 0.05,
            "mean {mean} vs kernel {kernel}"
        );
    }
}
