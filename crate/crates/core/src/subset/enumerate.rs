//! Exact marginals and conditional mutual information by enumerating all `2^n`
//! masks for a fixed supersample.
//!
//! Masks are processed in fixed-size chunks in parallel and the chunk results
//! are merged in chunk order, so the floating-point result does not depend on
//! the number of worker threads.

use rand::Rng;
use rayon::prelude::*;

use super::{check_distribution, discrete_kl, DiscreteLearner, Mask, Supersample};
use crate::error::{Error, Result};

/// Largest `n` for which `2^n` masks are enumerated.
pub const MAX_ENUMERATION_N: usize = 20;

const CHUNK: u64 = 1 << 10;

pub(crate) fn check_enumerable(n: usize) -> Result<()> {
    if n <= MAX_ENUMERATION_N {
        Ok(())
    } else {
        Err(Error::EnumerationTooLarge {
            n,
            max: MAX_ENUMERATION_N,
        })
    }
}

/// Maps every mask chunk to a partial result and merges the partials in order.
pub(crate) fn fold_masks<T, F, M>(n: usize, map: F, mut merge: M) -> Result<Option<T>>
where
    T: Send,
    F: Fn(std::ops::Range<u64>) -> Result<T> + Sync,
    M: FnMut(T, T) -> T,
{
    check_enumerable(n)?;
    let total = 1u64 << n;
    let chunks = total.div_ceil(CHUNK);
    let partials: Vec<T> = (0..chunks)
        .into_par_iter()
        .map(|c| map(c * CHUNK..((c + 1) * CHUNK).min(total)))
        .collect::<Result<_>>()?;
    Ok(partials.into_iter().reduce(&mut merge))
}

pub(crate) fn posterior_for<Z, L>(learner: &L, supersample: &Supersample<Z>, mask: &Mask) -> Result<Vec<f64>>
where
    L: DiscreteLearner<Z> + ?Sized,
{
    let p = learner.posterior(&supersample.select(mask)?);
    check_distribution(&p, learner.num_hypotheses())?;
    Ok(p)
}

fn add_into(acc: &mut [f64], p: &[f64]) {
    acc.iter_mut().zip(p).for_each(|(a, b)| *a += b);
}

/// Marginal `P_{W|Z~}` together with the per-bit conditionals
/// `P_{W|Z~, S_i = b}`, all exact.
#[derive(Clone, Debug)]
pub struct MaskSummary {
    pub n: usize,
    pub marginal: Vec<f64>,
    /// `bit_conditionals[i][b]` is `P_{W | Z~, S_i = b}`.
    pub bit_conditionals: Vec<[Vec<f64>; 2]>,
}

impl MaskSummary {
    pub fn compute<Z, L>(learner: &L, supersample: &Supersample<Z>) -> Result<Self>
    where
        Z: Sync,
        L: DiscreteLearner<Z> + Sync + ?Sized,
    {
        let n = supersample.n();
        let m = learner.num_hypotheses();
        let empty = || (vec![0.0; m], vec![[vec![0.0; m], vec![0.0; m]]; n]);
        let merged = fold_masks(
            n,
            |range| {
                let (mut marg, mut cond) = empty();
                for code in range {
                    let mask = Mask::from_code(code, n);
                    let p = posterior_for(learner, supersample, &mask)?;
                    add_into(&mut marg, &p);
                    for (i, &b) in mask.bits().iter().enumerate() {
                        add_into(&mut cond[i][usize::from(b)], &p);
                    }
                }
                Ok((marg, cond))
            },
            |(mut ma, mut ca), (mb, cb)| {
                add_into(&mut ma, &mb);
                for (x, y) in ca.iter_mut().zip(&cb) {
                    add_into(&mut x[0], &y[0]);
                    add_into(&mut x[1], &y[1]);
                }
                (ma, ca)
            },
        )?
        .expect("at least one mask");

        let total = (1u64 << n) as f64;
        let half = total / 2.0;
        let (mut marginal, mut bit_conditionals) = merged;
        marginal.iter_mut().for_each(|v| *v /= total);
        for pair in &mut bit_conditionals {
            for side in pair.iter_mut() {
                side.iter_mut().for_each(|v| *v /= half);
            }
        }
        Ok(Self {
            n,
            marginal,
            bit_conditionals,
        })
    }

    /// `I(W; S_i | Z~ = z~)`.
    pub fn samplewise_cmi(&self, i: usize) -> Result<f64> {
        let pair = self.bit_conditionals.get(i).ok_or(Error::DimensionMismatch {
            expected: self.n,
            got: i + 1,
        })?;
        Ok(0.5 * discrete_kl(&pair[0], &self.marginal)? + 0.5 * discrete_kl(&pair[1], &self.marginal)?)
    }
}

/// `P_{W|Z~} = 2^-n sum_s P_{W|Z~, s}`.
pub fn enumerate_marginal<Z, L>(learner: &L, supersample: &Supersample<Z>) -> Result<Vec<f64>>
where
    Z: Sync,
    L: DiscreteLearner<Z> + Sync + ?Sized,
{
    let n = supersample.n();
    let m = learner.num_hypotheses();
    let sum = fold_masks(
        n,
        |range| {
            let mut acc = vec![0.0; m];
            for code in range {
                add_into(&mut acc, &posterior_for(learner, supersample, &Mask::from_code(code, n))?);
            }
            Ok(acc)
        },
        |mut a, b| {
            add_into(&mut a, &b);
            a
        },
    )?
    .expect("at least one mask");
    let total = (1u64 << n) as f64;
    Ok(sum.into_iter().map(|v| v / total).collect())
}

/// `I(W; S | Z~ = z~) = E_S[D(P_{W|z~,S} || P_{W|z~})]` for this fixed supersample.
pub fn exact_cmi<Z, L>(learner: &L, supersample: &Supersample<Z>) -> Result<f64>
where
    Z: Sync,
    L: DiscreteLearner<Z> + Sync + ?Sized,
{
    let marginal = enumerate_marginal(learner, supersample)?;
    cmi_against(learner, supersample, &marginal)
}

pub(crate) fn cmi_against<Z, L>(learner: &L, supersample: &Supersample<Z>, marginal: &[f64]) -> Result<f64>
where
    Z: Sync,
    L: DiscreteLearner<Z> + Sync + ?Sized,
{
    let n = supersample.n();
    let sum = fold_masks(
        n,
        |range| {
            let mut acc = 0.0;
            for code in range {
                let p = posterior_for(learner, supersample, &Mask::from_code(code, n))?;
                acc += discrete_kl(&p, marginal)?;
            }
            Ok(acc)
        },
        |a, b| a + b,
    )?
    .expect("at least one mask");
    Ok(sum / (1u64 << n) as f64)
}

/// `I(W; S_i | Z~ = z~)`, with `i` 0-based.
pub fn exact_samplewise_cmi<Z, L>(learner: &L, supersample: &Supersample<Z>, i: usize) -> Result<f64>
where
    Z: Sync,
    L: DiscreteLearner<Z> + Sync + ?Sized,
{
    MaskSummary::compute(learner, supersample)?.samplewise_cmi(i)
}

/// All `n` samplewise terms from a single enumeration.
pub fn exact_samplewise_cmis<Z, L>(learner: &L, supersample: &Supersample<Z>) -> Result<Vec<f64>>
where
    Z: Sync,
    L: DiscreteLearner<Z> + Sync + ?Sized,
{
    let summary = MaskSummary::compute(learner, supersample)?;
    (0..summary.n).map(|i| summary.samplewise_cmi(i)).collect()
}

/// `I(W; S | Z~)` averaged over `draws` supersamples from `sampler`.
pub fn mean_exact_cmi<Z, L, R, F>(learner: &L, mut sampler: F, draws: usize, rng: &mut R) -> Result<f64>
where
    Z: Sync,
    L: DiscreteLearner<Z> + Sync + ?Sized,
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> Supersample<Z>,
{
    if draws == 0 {
        return Err(crate::error::invalid("need at least one supersample draw"));
    }
    let mut total = 0.0;
    for _ in 0..draws {
        total += exact_cmi(learner, &sampler(rng))?;
    }
    Ok(total / draws as f64)
}
