//! The random-subset setting: a supersample of `2n` instances, a mask of `n`
//! fair coin flips choosing which half of each pair is used for training, and
//! the empirical losses on the chosen and unchosen halves.
//!
//! Indexing: position `i` (0-based, `0..n`) with mask bit `s` selects
//! supersample entry `i + s * n`. This is the 1-based rule `Z~_{i + S_i n}`
//! shifted by one, and [`supersample_index`] is the only place it is written.

use std::fmt;

use rand::Rng;

use crate::error::{invalid, Error, Result};

pub mod enumerate;
pub mod toy;
pub mod verify;

pub use enumerate::{
    enumerate_marginal, exact_cmi, exact_samplewise_cmi, exact_samplewise_cmis, mean_exact_cmi,
    MaskSummary, MAX_ENUMERATION_N,
};
pub use verify::{
    exact_exponential_moment, mc_verify, tail_coverage, DiscreteSubsetModel, ExpInequality,
    GaussianSubsetModel, McEstimate, PacBayesDraw, PriorChoice, RandomSubsetModel, SingleDraw,
    TailBound, TailReport,
};

/// Supersample position selected by bit `bit` at training position `i`.
#[inline]
pub fn supersample_index(i: usize, bit: bool, n: usize) -> usize {
    i + usize::from(bit) * n
}

/// The `2n` candidate instances.
#[derive(Clone, Debug, PartialEq)]
pub struct Supersample<Z> {
    samples: Vec<Z>,
    n: usize,
}

impl<Z> Supersample<Z> {
    pub fn new(samples: Vec<Z>) -> Result<Self> {
        if samples.is_empty() || !samples.len().is_multiple_of(2) {
            return Err(invalid(format!(
                "a supersample needs an even, nonzero number of instances, got {}",
                samples.len()
            )));
        }
        let n = samples.len() / 2;
        Ok(Self { samples, n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn samples(&self) -> &[Z] {
        &self.samples
    }

    /// Training view `Z(S)`.
    pub fn select(&self, mask: &Mask) -> Result<Vec<&Z>> {
        self.check(mask)?;
        Ok((0..self.n)
            .map(|i| &self.samples[supersample_index(i, mask.bits[i], self.n)])
            .collect())
    }

    /// Test view `Z(S-bar)`.
    pub fn select_complement(&self, mask: &Mask) -> Result<Vec<&Z>> {
        self.select(&mask.complement())
    }

    fn check(&self, mask: &Mask) -> Result<()> {
        if mask.len() == self.n {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.n,
                got: mask.len(),
            })
        }
    }
}

/// Selection vector `S`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Mask {
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(vec![false; n])
    }

    /// Mask whose bit `i` is bit `i` of `code`.
    pub fn from_code(code: u64, n: usize) -> Self {
        debug_assert!(n <= 64);
        Self::new((0..n).map(|i| (code >> i) & 1 == 1).collect())
    }

    pub fn code(&self) -> u64 {
        debug_assert!(self.bits.len() <= 64);
        self.bits
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &b)| acc | (u64::from(b) << i))
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Self::new((0..n).map(|_| rng.random::<bool>()).collect())
    }

    pub fn complement(&self) -> Self {
        Self::new(self.bits.iter().map(|b| !b).collect())
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Supersample indices of the training half.
    pub fn train_indices(&self) -> Vec<usize> {
        let n = self.len();
        (0..n).map(|i| supersample_index(i, self.bits[i], n)).collect()
    }

    /// Supersample indices of the held-out half.
    pub fn test_indices(&self) -> Vec<usize> {
        self.complement().train_indices()
    }
}

impl fmt::Display for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// A loss `l(h, z)` with values in `[0, 1]`.
pub trait LossFunction<H: ?Sized, Z> {
    fn loss(&self, hypothesis: &H, instance: &Z) -> f64;
}

impl<H: ?Sized, Z, F> LossFunction<H, Z> for F
where
    F: Fn(&H, &Z) -> f64,
{
    fn loss(&self, hypothesis: &H, instance: &Z) -> f64 {
        self(hypothesis, instance)
    }
}

/// Mean loss of `hypothesis` over `view`.
pub fn empirical_loss<H, Z, L>(hypothesis: &H, view: &[&Z], loss: &L) -> f64
where
    H: ?Sized,
    L: LossFunction<H, Z> + ?Sized,
{
    if view.is_empty() {
        return 0.0;
    }
    let total: f64 = view
        .iter()
        .map(|z| {
            let v = loss.loss(hypothesis, z);
            debug_assert!((0.0..=1.0).contains(&v), "loss {v} outside [0, 1]");
            v
        })
        .sum();
    total / view.len() as f64
}

/// `L_{Z(S)}(h)`.
pub fn train_loss<H, Z, L>(hypothesis: &H, supersample: &Supersample<Z>, mask: &Mask, loss: &L) -> Result<f64>
where
    H: ?Sized,
    L: LossFunction<H, Z> + ?Sized,
{
    Ok(empirical_loss(hypothesis, &supersample.select(mask)?, loss))
}

/// `L_{Z(S-bar)}(h)`.
pub fn test_loss<H, Z, L>(hypothesis: &H, supersample: &Supersample<Z>, mask: &Mask, loss: &L) -> Result<f64>
where
    H: ?Sized,
    L: LossFunction<H, Z> + ?Sized,
{
    Ok(empirical_loss(hypothesis, &supersample.select_complement(mask)?, loss))
}

/// A randomized learner over a finite hypothesis set `0..m`.
pub trait DiscreteLearner<Z> {
    fn num_hypotheses(&self) -> usize;

    /// `P_{W | Z(S)}` as a probability vector of length `num_hypotheses()`.
    fn posterior(&self, train: &[&Z]) -> Vec<f64>;
}

/// Checks that `p` is a probability vector of length `m`.
pub(crate) fn check_distribution(p: &[f64], m: usize) -> Result<()> {
    if p.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: p.len(),
        });
    }
    if p.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(invalid("probability vector has a negative or non-finite entry"));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(invalid(format!("probability vector sums to {total}, not 1")));
    }
    Ok(())
}

/// `sum_w p(w) log(p(w) / q(w))`; errors when `q` misses mass of `p`.
pub fn discrete_kl(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    let mut total = 0.0;
    for (w, (&pw, &qw)) in p.iter().zip(q).enumerate() {
        if pw > 0.0 {
            if qw <= 0.0 {
                return Err(Error::SupportMismatch(w));
            }
            total += pw * (pw / qw).ln();
        }
    }
    Ok(total.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numbered(n: usize) -> Supersample<usize> {
        Supersample::new((1..=2 * n).collect()).unwrap()
    }

    #[test]
    fn select_follows_indexing_rule() {
        let z = numbered(2);
        let view = z.select(&Mask::new(vec![false, true])).unwrap();
        assert_eq!(view, vec![&1, &4]);
        let rest = z.select_complement(&Mask::new(vec![false, true])).unwrap();
        assert_eq!(rest, vec![&3, &2]);

        let z = numbered(3);
        assert_eq!(z.select(&Mask::zeros(3)).unwrap(), vec![&1, &2, &3]);
        assert_eq!(z.select(&Mask::new(vec![true; 3])).unwrap(), vec![&4, &5, &6]);
        assert!(z.select(&Mask::zeros(2)).is_err());
    }

    #[test]
    fn supersample_requires_even_length() {
        assert!(Supersample::new(vec![1, 2, 3]).is_err());
        assert!(Supersample::<u8>::new(vec![]).is_err());
    }

    #[test]
    fn mask_codes_round_trip() {
        for code in 0..64u64 {
            let m = Mask::from_code(code, 6);
            assert_eq!(m.code(), code);
            assert_eq!(m.complement().code(), 63 - code);
        }
        assert_eq!(Mask::from_code(0b10, 3).to_string(), "010");
    }

    #[test]
    fn views_partition_the_supersample() {
        let n = 5;
        let z = numbered(n);
        for code in 0..(1u64 << n) {
            let m = Mask::from_code(code, n);
            let mut all: Vec<usize> = z
                .select(&m)
                .unwrap()
                .into_iter()
                .chain(z.select_complement(&m).unwrap())
                .copied()
                .collect();
            all.sort_unstable();
            assert_eq!(all, (1..=2 * n).collect::<Vec<_>>());
            let mut idx = m.train_indices();
            idx.extend(m.test_indices());
            idx.sort_unstable();
            assert_eq!(idx, (0..2 * n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn empirical_losses() {
        let z = Supersample::new(vec![0u8, 1, 1, 1, 0, 0, 0, 0]).unwrap();
        let predict_zero = |_: &(), x: &u8| f64::from(*x);
        let m = Mask::zeros(4);
        assert_eq!(train_loss(&(), &z, &m, &predict_zero).unwrap(), 0.75);
        assert_eq!(test_loss(&(), &z, &m, &predict_zero).unwrap(), 0.0);
        let one_wrong = Supersample::new(vec![1u8, 0, 0, 0, 0, 0, 0, 0]).unwrap();
        assert_eq!(train_loss(&(), &one_wrong, &m, &predict_zero).unwrap(), 0.25);
        let all_wrong = |_: &(), _: &u8| 1.0;
        assert_eq!(train_loss(&(), &z, &m, &all_wrong).unwrap(), 1.0);
    }

    #[test]
    fn discrete_kl_basics() {
        assert_eq!(discrete_kl(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        let v = discrete_kl(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(matches!(discrete_kl(&[0.5, 0.5], &[1.0, 0.0]), Err(Error::SupportMismatch(1))));
    }
}
