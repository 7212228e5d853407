//! Isotropic Gaussian posteriors and priors over weight vectors.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// `N(mean, sigma^2 I_d)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsotropicGaussian {
    mean: Vec<f64>,
    sigma: f64,
}

impl IsotropicGaussian {
    pub fn new(mean: Vec<f64>, sigma: f64) -> Result<Self> {
        if mean.is_empty() {
            return Err(invalid("Gaussian mean must have at least one coordinate"));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(invalid(format!("sigma must be positive, got {sigma}")));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(invalid("Gaussian mean must be finite"));
        }
        Ok(Self { mean, sigma })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::new(self.mean.clone(), sigma)
    }

    /// `mean + sigma * xi`, `xi` standard normal per coordinate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.mean
            .iter()
            .map(|&m| {
                let xi: f64 = rng.sample(StandardNormal);
                m + self.sigma * xi
            })
            .collect()
    }

    /// Same as [`sample`](Self::sample) with externally supplied standard
    /// normal noise, so that several sigmas can share one noise draw.
    pub fn sample_with_noise(&self, noise: &[f64]) -> Result<Vec<f64>> {
        check_dims(self.dim(), noise.len())?;
        Ok(self
            .mean
            .iter()
            .zip(noise)
            .map(|(&m, &xi)| m + self.sigma * xi)
            .collect())
    }
}

fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// Neumaier-compensated sum of squared differences.
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        let term = d * d;
        let t = sum + term;
        if sum.abs() >= term {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    }
    if sum.is_infinite() {
        return sum;
    }
    sum + comp
}

/// `D(p || q)` in nats.
pub fn kl_isotropic(p: &IsotropicGaussian, q: &IsotropicGaussian) -> Result<f64> {
    check_dims(p.dim(), q.dim())?;
    let d = p.dim() as f64;
    let ratio = (p.sigma / q.sigma).powi(2);
    // log(sq^2/sp^2) + sp^2/sq^2 - 1 = ratio - 1 - ln(ratio) >= 0
    let scale_term = if ratio == 1.0 {
        0.0
    } else {
        (ratio - 1.0) - ratio.ln()
    };
    let mean_term = squared_distance(&p.mean, &q.mean) / (2.0 * q.sigma * q.sigma);
    let kl = 0.5 * d * scale_term + mean_term;
    if kl.is_nan() {
        return Err(invalid("KL divergence is not a number"));
    }
    Ok(kl.max(0.0))
}

/// `log dp/dq (w) = d log(sq/sp) + |w - mu_q|^2/(2 sq^2) - |w - mu_p|^2/(2 sp^2)`.
pub fn log_density_ratio(p: &IsotropicGaussian, q: &IsotropicGaussian, w: &[f64]) -> Result<f64> {
    check_dims(p.dim(), q.dim())?;
    check_dims(p.dim(), w.len())?;
    let d = p.dim() as f64;
    Ok(d * (q.sigma / p.sigma).ln() + squared_distance(w, &q.mean) / (2.0 * q.sigma * q.sigma)
        - squared_distance(w, &p.mean) / (2.0 * p.sigma * p.sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn g(mean: &[f64], sigma: f64) -> IsotropicGaussian {
        IsotropicGaussian::new(mean.to_vec(), sigma).unwrap()
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(IsotropicGaussian::new(vec![], 1.0).is_err());
        assert!(IsotropicGaussian::new(vec![0.0], 0.0).is_err());
        assert!(IsotropicGaussian::new(vec![f64::NAN], 1.0).is_err());
        assert!(kl_isotropic(&g(&[0.0], 1.0), &g(&[0.0, 0.0], 1.0)).is_err());
        assert!(log_density_ratio(&g(&[0.0], 1.0), &g(&[0.0], 1.0), &[0.0, 1.0]).is_err());
    }

    #[test]
    fn kl_examples() {
        let p = g(&[0.3, -1.0], 0.7);
        assert_eq!(kl_isotropic(&p, &p).unwrap(), 0.0);
        assert_abs_diff_eq!(kl_isotropic(&g(&[1.0, 0.0], 1.0), &g(&[0.0, 0.0], 1.0)).unwrap(), 0.5, epsilon = 1e-15);
        let expected = (4f64.ln() + 0.25 - 1.0) / 2.0;
        assert_abs_diff_eq!(kl_isotropic(&g(&[2.0], 1.0), &g(&[2.0], 2.0)).unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 0.31815, epsilon = 1e-5);
    }

    #[test]
    fn log_ratio_examples() {
        let p = g(&[1.0, 2.0], 0.5);
        assert_eq!(log_density_ratio(&p, &p, &[9.0, -3.0]).unwrap(), 0.0);
        let q = g(&[0.0, 1.0], 0.5);
        let at_mean = log_density_ratio(&p, &q, &[1.0, 2.0]).unwrap();
        assert_abs_diff_eq!(at_mean, 2.0 / (2.0 * 0.25), epsilon = 1e-12);
    }

    #[test]
    fn log_ratio_is_antisymmetric() {
        let p = g(&[0.1, 0.2, 0.3], 0.4);
        let q = g(&[-0.5, 0.0, 1.0], 1.3);
        let w = [0.7, -0.2, 0.05];
        let a = log_density_ratio(&p, &q, &w).unwrap();
        let b = log_density_ratio(&q, &p, &w).unwrap();
        assert_abs_diff_eq!(a, -b, epsilon = 1e-12);
    }

    #[test]
    fn sampling_is_deterministic_and_centred() {
        let p = g(&[1.0, -2.0], 0.5);
        let a = p.sample(&mut ChaCha8Rng::seed_from_u64(3));
        let b = p.sample(&mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);

        let tiny = g(&[1.0, -2.0], 1e-300);
        assert_eq!(tiny.sample(&mut ChaCha8Rng::seed_from_u64(1)), vec![1.0, -2.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 100_000;
        let mut sums = [0.0; 2];
        for _ in 0..draws {
            let w = p.sample(&mut rng);
            sums[0] += w[0];
            sums[1] += w[1];
        }
        let tol = 4.0 * 0.5 / (draws as f64).sqrt();
        assert!((sums[0] / draws as f64 - 1.0).abs() < tol);
        assert!((sums[1] / draws as f64 + 2.0).abs() < tol);
    }

    #[test]
    fn compensated_norm_handles_many_small_terms() {
        let d = 1_000_000;
        let a = vec![1e-4; d];
        let b = vec![0.0; d];
        assert_abs_diff_eq!(squared_distance(&a, &b), 1e-2, epsilon = 1e-15);
    }

    #[test]
    fn overflowing_distance_gives_infinite_kl() {
        let p = g(&[1e200, -1e200], 1.0);
        let q = g(&[-1e200, 1e200], 1.0);
        assert_eq!(squared_distance(p.mean(), q.mean()), f64::INFINITY);
        assert_eq!(kl_isotropic(&p, &q).unwrap(), f64::INFINITY);
    }
}
