use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{invalid, Result};

/// Dense features with integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    num_classes: usize,
}

impl Dataset {
    /// `features` is row-major, `labels.len()` rows of `dim` values.
    pub fn new(features: Vec<f64>, labels: Vec<usize>, dim: usize, num_classes: usize) -> Result<Self> {
        if dim == 0 || num_classes < 2 {
            return Err(invalid("dataset needs dim >= 1 and at least two classes"));
        }
        if features.len() != labels.len() * dim {
            return Err(invalid(format!(
                "{} feature values do not form {} rows of width {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(invalid(format!("label {bad} out of range for {num_classes} classes")));
        }
        Ok(Self {
            features,
            labels,
            dim,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            features,
            labels,
            dim: self.dim,
            num_classes: self.num_classes,
        }
    }

    /// The first `count` rows.
    pub fn head(&self, count: usize) -> Result<Dataset> {
        if count > self.len() {
            return Err(invalid(format!("asked for {count} rows, dataset has {}", self.len())));
        }
        Ok(self.select(&(0..count).collect::<Vec<_>>()))
    }

    fn with_labels(&self, labels: Vec<usize>, num_classes: usize) -> Dataset {
        Dataset {
            features: self.features.clone(),
            labels,
            dim: self.dim,
            num_classes,
        }
    }
}

/// Resamples the labels of exactly `round(fraction * N)` rows (half away from
/// zero) uniformly over all `num_classes` classes. The positions are chosen
/// uniformly without replacement.
pub fn randomize_labels(data: &Dataset, fraction: f64, num_classes: usize, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(invalid(format!("fraction must lie in [0, 1], got {fraction}")));
    }
    if num_classes < data.num_classes() {
        return Err(invalid("cannot randomize into fewer classes than the data use"));
    }
    let count = (fraction * data.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = data.labels.clone();
    for pos in index::sample(&mut rng, data.len(), count) {
        labels[pos] = rng.random_range(0..num_classes);
    }
    Ok(data.with_labels(labels, num_classes))
}

/// Digits 0..=4 become class 0, everything else class 1. Data that already
/// have two classes are returned unchanged, which makes the map idempotent.
pub fn binarize_labels(data: &Dataset) -> Dataset {
    if data.num_classes() == 2 {
        return data.clone();
    }
    let labels = data.labels.iter().map(|&y| usize::from(y >= 5)).collect();
    data.with_labels(labels, 2)
}

/// Two Gaussian classes: `y` uniform on `{0, 1}`, `x ~ N((2y - 1) offset e_1, noise_std^2 I)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub dim: usize,
    /// Distance of each class mean from the origin along the first axis.
    pub offset: f64,
    #[serde(default = "one")]
    pub noise_std: f64,
    pub size: usize,
}

fn one() -> f64 {
    1.0
}

impl SynthSpec {
    /// `Phi(-offset / noise_std)`.
    pub fn bayes_error(&self) -> f64 {
        0.5 * erfc(self.offset / self.noise_std / std::f64::consts::SQRT_2)
    }
}

/// Samples are drawn sequentially from one stream, so a spec with a larger
/// `size` extends the smaller one.
pub fn synth_dataset(spec: &SynthSpec, seed: u64) -> Result<Dataset> {
    if spec.dim == 0 {
        return Err(invalid("synthetic dimension must be at least 1"));
    }
    if !(spec.noise_std.is_finite() && spec.noise_std > 0.0) || !spec.offset.is_finite() {
        return Err(invalid("synthetic offset must be finite and noise_std positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(spec.size * spec.dim);
    let mut labels = Vec::with_capacity(spec.size);
    for _ in 0..spec.size {
        let y = usize::from(rng.random::<bool>());
        let sign = if y == 1 { 1.0 } else { -1.0 };
        for k in 0..spec.dim {
            let e: f64 = rng.sample(StandardNormal);
            let centre = if k == 0 { sign * spec.offset } else { 0.0 };
            features.push(centre + spec.noise_std * e);
        }
        labels.push(y);
    }
    Dataset::new(features, labels, spec.dim, 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec(offset: f64, size: usize) -> SynthSpec {
        SynthSpec {
            dim: 2,
            offset,
            noise_std: 1.0,
            size,
        }
    }

    #[test]
    fn bayes_error_examples() {
        assert_abs_diff_eq!(spec(0.0, 1).bayes_error(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(spec(1.0, 1).bayes_error(), 0.158655, epsilon = 1e-6);
        assert!(spec(10.0, 1).bayes_error() < 1e-20);
    }

    #[test]
    fn synthetic_data_is_seeded_and_nested() {
        let a = synth_dataset(&spec(1.0, 50), 3).unwrap();
        let b = synth_dataset(&spec(1.0, 50), 3).unwrap();
        assert_eq!(a, b);
        let big = synth_dataset(&spec(1.0, 80), 3).unwrap();
        assert_eq!(big.head(50).unwrap(), a);
        assert_ne!(synth_dataset(&spec(1.0, 50), 4).unwrap(), a);
    }

    #[test]
    fn empirical_bayes_rule_error_matches_closed_form() {
        let s = spec(1.0, 40_000);
        let d = synth_dataset(&s, 8).unwrap();
        let wrong = (0..d.len())
            .filter(|&i| usize::from(d.row(i)[0] > 0.0) != d.label(i))
            .count() as f64
            / d.len() as f64;
        let se = (s.bayes_error() * (1.0 - s.bayes_error()) / d.len() as f64).sqrt();
        assert!((wrong - s.bayes_error()).abs() < 4.0 * se);
    }

    #[test]
    fn randomize_counts_and_identity() {
        let d = synth_dataset(&spec(1.0, 100), 1).unwrap();
        assert_eq!(randomize_labels(&d, 0.0, 2, 5).unwrap(), d);
        // with 1000 classes a resampled label almost never lands on the old one
        let r = randomize_labels(&d, 0.5, 1000, 5).unwrap();
        let changed = (0..100).filter(|&i| r.label(i) != d.label(i)).count();
        assert!((48..=50).contains(&changed), "{changed}");
        assert_eq!(r, randomize_labels(&d, 0.5, 1000, 5).unwrap());
        assert!(randomize_labels(&d, 1.5, 2, 0).is_err());
    }

    #[test]
    fn full_randomization_agrees_at_chance() {
        let labels: Vec<usize> = (0..4000).map(|i| i % 10).collect();
        let d = Dataset::new(vec![0.0; 4000], labels, 1, 10).unwrap();
        let mut agree = 0;
        for seed in 0..5 {
            let r = randomize_labels(&d, 1.0, 10, seed).unwrap();
            agree += (0..d.len()).filter(|&i| r.label(i) == d.label(i)).count();
        }
        let rate = agree as f64 / 20_000.0;
        assert!((rate - 0.1).abs() < 4.0 * (0.09f64 / 20_000.0).sqrt(), "{rate}");
    }

    #[test]
    fn binarize_rule() {
        let d = Dataset::new(vec![0.0; 10], (0..10).collect(), 1, 10).unwrap();
        let b = binarize_labels(&d);
        assert_eq!(b.labels(), &[0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
        assert_eq!(b.label(3), 0);
        assert_eq!(b.label(7), 1);
        assert_eq!(binarize_labels(&b), b);
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(vec![0.0; 3], vec![0, 1], 2, 2).is_err());
        assert!(Dataset::new(vec![0.0; 4], vec![0, 2], 2, 2).is_err());
        assert!(Dataset::new(vec![0.0; 4], vec![0, 1], 2, 1).is_err());
    }
}
