use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, ModelSpec};
use crate::error::{invalid, Error, Result};

/// Stream id of the shuffling generator; the initialization uses stream 0.
const SHUFFLE_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    pub alpha0: f64,
    /// Schedule decay, unrelated to the bound's `gamma`.
    #[serde(default)]
    pub decay_rate: f64,
    #[serde(default = "default_interval")]
    pub epoch_interval: usize,
    #[serde(default)]
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Stop once the train 0-1 error at the end of an epoch is at most this.
    #[serde(default)]
    pub stop_at_train_loss: Option<f64>,
}

fn default_interval() -> usize {
    1
}

impl SgdConfig {
    /// Plain SGD with `alpha0 / (1 + decay_rate * floor(E / epoch_interval))`.
    pub fn decaying(alpha0: f64, decay_rate: f64, epoch_interval: usize, batch_size: usize, epochs: usize) -> Self {
        Self {
            alpha0,
            decay_rate,
            epoch_interval,
            momentum: 0.0,
            batch_size,
            epochs,
            seed: 0,
            stop_at_train_loss: None,
        }
    }

    /// Constant learning rate with heavy-ball momentum.
    pub fn momentum(alpha0: f64, momentum: f64, batch_size: usize, epochs: usize) -> Self {
        Self {
            momentum,
            ..Self::decaying(alpha0, 0.0, 1, batch_size, epochs)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0.is_finite() && self.alpha0 > 0.0) {
            return Err(invalid(format!("alpha0 must be positive, got {}", self.alpha0)));
        }
        if !(self.decay_rate.is_finite() && self.decay_rate >= 0.0) {
            return Err(invalid(format!("decay_rate must be nonnegative, got {}", self.decay_rate)));
        }
        if self.epoch_interval == 0 || self.batch_size == 0 {
            return Err(invalid("epoch_interval and batch_size must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(invalid(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if let Some(t) = self.stop_at_train_loss {
            if !(0.0..=1.0).contains(&t) {
                return Err(invalid(format!("stop_at_train_loss must lie in [0, 1], got {t}")));
            }
        }
        Ok(())
    }
}

pub fn learning_rate(epoch: usize, config: &SgdConfig) -> f64 {
    config.alpha0 / (1.0 + config.decay_rate * (epoch / config.epoch_interval) as f64)
}

/// Per-epoch record; `cross_entropy` and `train_error` are full-dataset values
/// after the epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub learning_rate: f64,
    pub cross_entropy: f64,
    pub train_error: f64,
}

pub fn sgd_train(spec: &ModelSpec, data: &Dataset, config: &SgdConfig) -> Result<Vec<f64>> {
    sgd_train_with_history(spec, data, config).map(|(w, _)| w)
}

/// Initialization uses stream 0 of `seed`, shuffling stream 1; the training
/// order is reshuffled at the start of every epoch.
pub fn sgd_train_with_history(spec: &ModelSpec, data: &Dataset, config: &SgdConfig) -> Result<(Vec<f64>, Vec<EpochStats>)> {
    spec.validate()?;
    config.validate()?;
    spec.check_data(data)?;
    if data.is_empty() {
        return Err(invalid("cannot train on an empty dataset"));
    }
    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut weights = spec.init(&mut init_rng);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(SHUFFLE_STREAM);

    let mut grad = vec![0.0; weights.len()];
    let mut velocity = vec![0.0; weights.len()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let lr = learning_rate(epoch, config);
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(config.batch_size) {
            let loss = spec.batch_gradient(&weights, data, batch, &mut grad);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::TrainingDiverged { epoch, loss });
            }
            if config.momentum > 0.0 {
                for ((w, v), g) in weights.iter_mut().zip(&mut velocity).zip(&grad) {
                    *v = config.momentum * *v - lr * g;
                    *w += *v;
                }
            } else {
                weights.iter_mut().zip(&grad).for_each(|(w, g)| *w -= lr * g);
            }
        }
        let cross_entropy = spec.mean_cross_entropy(&weights, data);
        if !cross_entropy.is_finite() {
            return Err(Error::TrainingDiverged {
                epoch,
                loss: cross_entropy,
            });
        }
        let train_error = spec.zero_one_error(&weights, data);
        history.push(EpochStats {
            epoch,
            learning_rate: lr,
            cross_entropy,
            train_error,
        });
        if config.stop_at_train_loss.is_some_and(|t| train_error <= t) {
            break;
        }
    }
    Ok((weights, history))
}
