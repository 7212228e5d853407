//! Small discrete settings where every quantity can be enumerated exactly.
//!
//! Instances carry a feature `x` in `0..K` and a binary label. Hypotheses are
//! the `2^K` labelings of the feature alphabet: hypothesis `h` predicts bit
//! `x` of `h`.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DiscreteLearner, LossFunction, Supersample};
use crate::error::{invalid, Result};

/// Largest feature alphabet (hypothesis count `2^K`).
pub const MAX_FEATURES: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ToyInstance {
    /// Position in the supersample it was drawn into (`0..2n`).
    pub id: usize,
    pub x: usize,
    pub y: u8,
}

/// `x` uniform on `0..K`, `y = f*(x)` flipped with probability `noise`.
#[derive(Clone, Debug)]
pub struct ToyDistribution {
    target: Vec<u8>,
    noise: f64,
}

impl ToyDistribution {
    pub fn new(target: Vec<u8>, noise: f64) -> Result<Self> {
        if target.is_empty() || target.len() > MAX_FEATURES {
            return Err(invalid(format!(
                "toy feature alphabet must have 1..={MAX_FEATURES} symbols"
            )));
        }
        if target.iter().any(|&y| y > 1) {
            return Err(invalid("toy labels are binary"));
        }
        if !(0.0..=0.5).contains(&noise) {
            return Err(invalid(format!("label noise must lie in [0, 0.5], got {noise}")));
        }
        Ok(Self { target, noise })
    }

    pub fn num_features(&self) -> usize {
        self.target.len()
    }

    pub fn num_hypotheses(&self) -> usize {
        1 << self.target.len()
    }

    pub fn target_hypothesis(&self) -> usize {
        self.target
            .iter()
            .enumerate()
            .fold(0, |acc, (x, &y)| acc | (usize::from(y) << x))
    }

    pub fn sample_instance<R: Rng + ?Sized>(&self, id: usize, rng: &mut R) -> ToyInstance {
        let x = rng.random_range(0..self.target.len());
        let flip = rng.random::<f64>() < self.noise;
        ToyInstance {
            id,
            x,
            y: self.target[x] ^ u8::from(flip),
        }
    }

    pub fn sample_supersample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Supersample<ToyInstance> {
        let samples = (0..2 * n).map(|id| self.sample_instance(id, rng)).collect();
        Supersample::new(samples).expect("2n > 0 instances")
    }

    /// `E_Z[l(h, Z)]` under the 0-1 loss.
    pub fn population_loss(&self, h: usize) -> f64 {
        let k = self.target.len() as f64;
        self.target
            .iter()
            .enumerate()
            .map(|(x, &y)| {
                if predict(h, x) == y {
                    self.noise
                } else {
                    1.0 - self.noise
                }
            })
            .sum::<f64>()
            / k
    }
}

#[inline]
pub fn predict(h: usize, x: usize) -> u8 {
    ((h >> x) & 1) as u8
}

/// Classification error of a labeling hypothesis.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroOneLoss;

impl LossFunction<usize, ToyInstance> for ZeroOneLoss {
    fn loss(&self, h: &usize, z: &ToyInstance) -> f64 {
        f64::from(u8::from(predict(*h, z.x) != z.y))
    }
}

fn errors(h: usize, train: &[&ToyInstance]) -> usize {
    train.iter().filter(|z| predict(h, z.x) != z.y).count()
}

/// Ignores the data.
#[derive(Clone, Debug)]
pub struct ConstantLearner {
    probs: Vec<f64>,
}

impl ConstantLearner {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        super::check_distribution(&probs, probs.len())?;
        Ok(Self { probs })
    }

    pub fn point_mass(m: usize, h: usize) -> Result<Self> {
        if h >= m {
            return Err(invalid("point mass outside the hypothesis set"));
        }
        let mut probs = vec![0.0; m];
        probs[h] = 1.0;
        Self::new(probs)
    }
}

impl<Z> DiscreteLearner<Z> for ConstantLearner {
    fn num_hypotheses(&self) -> usize {
        self.probs.len()
    }

    fn posterior(&self, _train: &[&Z]) -> Vec<f64> {
        self.probs.clone()
    }
}

/// `P(h | Z(S)) ∝ exp(-beta * #errors of h on Z(S))`.
#[derive(Clone, Debug)]
pub struct GibbsLearner {
    num_features: usize,
    beta: f64,
}

impl GibbsLearner {
    pub fn new(num_features: usize, beta: f64) -> Result<Self> {
        if num_features == 0 || num_features > MAX_FEATURES {
            return Err(invalid("bad feature alphabet size"));
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(invalid(format!("inverse temperature must be >= 0, got {beta}")));
        }
        Ok(Self { num_features, beta })
    }
}

impl DiscreteLearner<ToyInstance> for GibbsLearner {
    fn num_hypotheses(&self) -> usize {
        1 << self.num_features
    }

    fn posterior(&self, train: &[&ToyInstance]) -> Vec<f64> {
        let logits: Vec<f64> = (0..self.num_hypotheses())
            .map(|h| -self.beta * errors(h, train) as f64)
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        weights.into_iter().map(|w| w / total).collect()
    }
}

/// Uniform over the empirical risk minimizers. Interpolates whenever the
/// training data are realizable.
#[derive(Clone, Debug)]
pub struct ErmLearner {
    num_features: usize,
}

impl ErmLearner {
    pub fn new(num_features: usize) -> Result<Self> {
        if num_features == 0 || num_features > MAX_FEATURES {
            return Err(invalid("bad feature alphabet size"));
        }
        Ok(Self { num_features })
    }
}

impl DiscreteLearner<ToyInstance> for ErmLearner {
    fn num_hypotheses(&self) -> usize {
        1 << self.num_features
    }

    fn posterior(&self, train: &[&ToyInstance]) -> Vec<f64> {
        let errs: Vec<usize> = (0..self.num_hypotheses()).map(|h| errors(h, train)).collect();
        let best = *errs.iter().min().expect("nonempty hypothesis set");
        let count = errs.iter().filter(|&&e| e == best).count() as f64;
        errs.iter()
            .map(|&e| if e == best { 1.0 / count } else { 0.0 })
            .collect()
    }
}

/// Outputs the mask itself: hypothesis `sum_i [S_i = 1] 2^i`, recovered from
/// the supersample ids of the training view.
#[derive(Clone, Debug)]
pub struct MaskMemorizer {
    n: usize,
}

impl MaskMemorizer {
    pub fn new(n: usize) -> Self {
        Self { n }
    }

    /// Supersample of `2n` placeholder instances with ids `0..2n`.
    pub fn supersample(n: usize) -> Supersample<ToyInstance> {
        Supersample::new((0..2 * n).map(|id| ToyInstance { id, x: 0, y: 0 }).collect())
            .expect("2n > 0 instances")
    }
}

impl DiscreteLearner<ToyInstance> for MaskMemorizer {
    fn num_hypotheses(&self) -> usize {
        1 << self.n
    }

    fn posterior(&self, train: &[&ToyInstance]) -> Vec<f64> {
        let code = train
            .iter()
            .enumerate()
            .fold(0usize, |acc, (i, z)| acc | (usize::from(z.id >= self.n) << i));
        let mut p = vec![0.0; self.num_hypotheses()];
        p[code] = 1.0;
        p
    }
}

/// Loss under which a memorizer fits exactly the half its hypothesis names:
/// `l(w, z) = 0` iff `z` sits on the side of its pair selected by bit `i` of `w`.
#[derive(Clone, Copy, Debug)]
pub struct MemorizerLoss {
    pub n: usize,
}

impl LossFunction<usize, ToyInstance> for MemorizerLoss {
    fn loss(&self, w: &usize, z: &ToyInstance) -> f64 {
        let i = z.id % self.n;
        let side = z.id >= self.n;
        f64::from(u8::from(((w >> i) & 1 == 1) != side))
    }
}

/// A learner whose posterior is an arbitrary (pseudo-random) function of the
/// training view: each ordered tuple of ids maps to its own probability vector.
#[derive(Clone, Debug)]
pub struct RandomTableLearner {
    m: usize,
    seed: u64,
}

impl RandomTableLearner {
    pub fn new(m: usize, seed: u64) -> Self {
        assert!(m >= 1);
        Self { m, seed }
    }
}

impl DiscreteLearner<ToyInstance> for RandomTableLearner {
    fn num_hypotheses(&self) -> usize {
        self.m
    }

    fn posterior(&self, train: &[&ToyInstance]) -> Vec<f64> {
        let key = train.iter().fold(self.seed ^ 0x5851_f42d_4c95_7f2d, |h, z| {
            (h ^ z.id as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15).rotate_left(29)
        });
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let weights: Vec<f64> = (0..self.m)
            .map(|_| {
                let u: f64 = rng.random();
                // sparse-ish posteriors make the check less forgiving
                if u < 0.2 { 0.0 } else { -(1.0 - u).ln() + 1e-3 }
            })
            .collect();
        let total: f64 = weights.iter().sum();
        if total == 0.0 {
            return vec![1.0 / self.m as f64; self.m];
        }
        weights.into_iter().map(|w| w / total).collect()
    }
}

/// Draws supersamples for a fixed `n` from a toy distribution.
pub fn toy_sampler(dist: ToyDistribution, n: usize) -> impl Fn(&mut dyn RngCore) -> Supersample<ToyInstance> + Send + Sync {
    move |rng: &mut dyn RngCore| dist.sample_supersample(n, rng)
}
