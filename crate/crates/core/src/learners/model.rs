use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{invalid, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Architecture {
    /// Multinomial logistic regression.
    Linear,
    /// Fully connected ReLU network with the given hidden widths.
    Mlp { hidden: Vec<usize> },
}

/// A softmax classifier. Parameters live in one flat vector, layer by layer:
/// the `out x in` weight matrix (row-major) followed by the `out` biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub input_dim: usize,
    pub num_classes: usize,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
}

fn default_init_std() -> f64 {
    0.01
}

impl ModelSpec {
    pub fn linear(input_dim: usize, num_classes: usize) -> Self {
        Self {
            architecture: Architecture::Linear,
            input_dim,
            num_classes,
            init_std: default_init_std(),
        }
    }

    pub fn mlp(input_dim: usize, hidden: Vec<usize>, num_classes: usize) -> Self {
        Self {
            architecture: Architecture::Mlp { hidden },
            input_dim,
            num_classes,
            init_std: default_init_std(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.num_classes < 2 {
            return Err(invalid("model needs input_dim >= 1 and at least two classes"));
        }
        if !(self.init_std.is_finite() && self.init_std > 0.0) {
            return Err(invalid(format!("init_std must be positive, got {}", self.init_std)));
        }
        if let Architecture::Mlp { hidden } = &self.architecture {
            if hidden.contains(&0) {
                return Err(invalid("hidden widths must be positive"));
            }
        }
        Ok(())
    }

    pub fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.dim() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: data.dim(),
            });
        }
        if data.num_classes() > self.num_classes {
            return Err(invalid(format!(
                "data have {} classes, model outputs {}",
                data.num_classes(),
                self.num_classes
            )));
        }
        Ok(())
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        if let Architecture::Mlp { hidden } = &self.architecture {
            w.extend(hidden);
        }
        w.push(self.num_classes);
        w
    }

    pub fn num_params(&self) -> usize {
        self.widths().windows(2).map(|p| p[1] * (p[0] + 1)).sum()
    }

    /// Every parameter drawn from `N(0, init_std^2)`.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.num_params())
            .map(|_| self.init_std * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    pub(crate) fn workspace(&self) -> Workspace {
        let widths = self.widths();
        Workspace {
            pre: widths[1..].iter().map(|&w| vec![0.0; w]).collect(),
            act: widths[1..].iter().map(|&w| vec![0.0; w]).collect(),
            delta: widths[1..].iter().map(|&w| vec![0.0; w]).collect(),
            widths,
        }
    }

    /// Class scores for one input.
    pub fn logits(&self, weights: &[f64], x: &[f64]) -> Vec<f64> {
        let mut ws = self.workspace();
        self.forward(weights, x, &mut ws);
        ws.pre.last().expect("at least one layer").clone()
    }

    fn forward(&self, weights: &[f64], x: &[f64], ws: &mut Workspace) {
        let layers = ws.widths.len() - 1;
        let mut offset = 0;
        for l in 0..layers {
            let (fan_in, fan_out) = (ws.widths[l], ws.widths[l + 1]);
            let (w, rest) = weights[offset..].split_at(fan_in * fan_out);
            let b = &rest[..fan_out];
            offset += fan_out * (fan_in + 1);
            let (before, after) = ws.act.split_at_mut(l);
            let input: &[f64] = if l == 0 { x } else { &before[l - 1] };
            let pre = &mut ws.pre[l];
            for o in 0..fan_out {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                pre[o] = b[o] + row.iter().zip(input).map(|(a, c)| a * c).sum::<f64>();
            }
            let act = &mut after[0];
            if l + 1 < layers {
                act.iter_mut().zip(pre.iter()).for_each(|(a, &p)| *a = p.max(0.0));
            } else {
                act.copy_from_slice(pre);
            }
        }
    }

    /// Index of the largest logit (lowest index on ties).
    pub fn predict(&self, weights: &[f64], x: &[f64]) -> usize {
        argmax(&self.logits(weights, x))
    }

    /// Mean 0-1 error over the whole dataset.
    pub fn zero_one_error(&self, weights: &[f64], data: &Dataset) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let mut ws = self.workspace();
        let wrong = (0..data.len())
            .filter(|&i| {
                self.forward(weights, data.row(i), &mut ws);
                argmax(ws.pre.last().unwrap()) != data.label(i)
            })
            .count();
        wrong as f64 / data.len() as f64
    }

    /// Mean cross-entropy over the whole dataset.
    pub fn mean_cross_entropy(&self, weights: &[f64], data: &Dataset) -> f64 {
        let mut ws = self.workspace();
        let total: f64 = (0..data.len())
            .map(|i| {
                self.forward(weights, data.row(i), &mut ws);
                cross_entropy(ws.pre.last().unwrap(), data.label(i)).0
            })
            .sum();
        total / data.len().max(1) as f64
    }

    /// Mean cross-entropy over `batch` rows; writes the mean gradient into `grad`.
    pub fn batch_gradient(&self, weights: &[f64], data: &Dataset, batch: &[usize], grad: &mut [f64]) -> f64 {
        debug_assert_eq!(grad.len(), weights.len());
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut ws = self.workspace();
        let layers = ws.widths.len() - 1;
        let offsets: Vec<usize> = ws
            .widths
            .windows(2)
            .scan(0, |acc, p| {
                let start = *acc;
                *acc += p[1] * (p[0] + 1);
                Some(start)
            })
            .collect();
        let mut total = 0.0;
        for &i in batch {
            let x = data.row(i);
            self.forward(weights, x, &mut ws);
            let (loss, probs) = cross_entropy(&ws.pre[layers - 1], data.label(i));
            total += loss;
            ws.delta[layers - 1].copy_from_slice(&probs);
            ws.delta[layers - 1][data.label(i)] -= 1.0;

            for l in (0..layers).rev() {
                let (fan_in, fan_out) = (ws.widths[l], ws.widths[l + 1]);
                let input: &[f64] = if l == 0 { x } else { &ws.act[l - 1] };
                let gw = &mut grad[offsets[l]..offsets[l] + fan_in * fan_out + fan_out];
                let (gw_mat, gb) = gw.split_at_mut(fan_in * fan_out);
                for o in 0..fan_out {
                    let d = ws.delta[l][o];
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    gw_mat[o * fan_in..(o + 1) * fan_in]
                        .iter_mut()
                        .zip(input)
                        .for_each(|(g, a)| *g += d * a);
                }
                if l > 0 {
                    let w = &weights[offsets[l]..offsets[l] + fan_in * fan_out];
                    let (lower, upper) = ws.delta.split_at_mut(l);
                    let below = &mut lower[l - 1];
                    below.iter_mut().for_each(|v| *v = 0.0);
                    for o in 0..fan_out {
                        let d = upper[0][o];
                        if d != 0.0 {
                            below.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]).for_each(|(b, wv)| *b += d * wv);
                        }
                    }
                    below.iter_mut().zip(&ws.pre[l - 1]).for_each(|(b, &z)| {
                        if z <= 0.0 {
                            *b = 0.0;
                        }
                    });
                }
            }
        }
        let scale = 1.0 / batch.len().max(1) as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        total * scale
    }
}

pub(crate) struct Workspace {
    widths: Vec<usize>,
    pre: Vec<Vec<f64>>,
    act: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `(-log softmax(logits)[label], softmax(logits))`.
fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let loss = total.ln() - (logits[label] - max);
    (loss, exps.into_iter().map(|e| e / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_data() -> Dataset {
        let features = vec![0.5, -1.0, 0.2, 1.5, 0.3, -0.2, -1.0, 0.4, 2.0, 0.1, -0.6, 0.9];
        Dataset::new(features, vec![0, 1, 2, 1, 0, 2], 2, 3).unwrap()
    }

    fn check_gradient(spec: &ModelSpec) {
        let data = toy_data();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut spec = spec.clone();
        spec.init_std = 0.7;
        let w = spec.init(&mut rng);
        let batch: Vec<usize> = (0..data.len()).collect();
        let mut grad = vec![0.0; w.len()];
        let loss = spec.batch_gradient(&w, &data, &batch, &mut grad);
        assert!((loss - spec.mean_cross_entropy(&w, &data)).abs() < 1e-12);
        let h = 1e-6;
        for k in 0..w.len() {
            let mut plus = w.clone();
            plus[k] += h;
            let mut minus = w.clone();
            minus[k] -= h;
            let fd = (spec.mean_cross_entropy(&plus, &data) - spec.mean_cross_entropy(&minus, &data)) / (2.0 * h);
            assert!((fd - grad[k]).abs() < 1e-6, "param {k}: fd {fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn linear_gradient_matches_finite_differences() {
        check_gradient(&ModelSpec::linear(2, 3));
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        check_gradient(&ModelSpec::mlp(2, vec![4, 3], 3));
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(ModelSpec::linear(784, 10).num_params(), 7850);
        assert_eq!(ModelSpec::mlp(784, vec![600, 600], 10).num_params(), 837_610);
    }

    #[test]
    fn zero_one_error_of_handset_weights() {
        // class 1 iff x0 > 0
        let spec = ModelSpec::linear(1, 2);
        let w = [-1.0, 1.0, 0.0, 0.0];
        let data = Dataset::new(vec![-2.0, -1.0, 1.0, 3.0], vec![0, 1, 1, 1], 1, 2).unwrap();
        assert_eq!(spec.zero_one_error(&w, &data), 0.25);
        assert_eq!(spec.predict(&w, &[5.0]), 1);
    }

    #[test]
    fn validation() {
        assert!(ModelSpec::mlp(3, vec![0], 2).validate().is_err());
        let mut s = ModelSpec::linear(3, 2);
        s.init_std = 0.0;
        assert!(s.validate().is_err());
        assert!(ModelSpec::linear(3, 2).check_data(&toy_data()).is_err());
    }
}
