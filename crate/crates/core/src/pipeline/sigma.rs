use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::split_delta;
use crate::error::{invalid, Error, Result};
use crate::learners::{Dataset, ModelSpec};

/// A value `a * 10^-b` with one significant digit, `a` in `1..=9`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneDigit {
    pub a: u8,
    pub b: i32,
}

impl OneDigit {
    pub fn new(a: u8, b: i32) -> Result<Self> {
        if !(1..=9).contains(&a) {
            return Err(invalid(format!("leading digit must lie in 1..=9, got {a}")));
        }
        Ok(Self { a, b })
    }

    /// Correctly rounded `a * 10^-b`.
    pub fn value(self) -> f64 {
        format!("{}e{}", self.a, -self.b)
            .parse()
            .expect("digit and exponent always parse")
    }

    /// Inverse of [`value`](Self::value); fails when `x` has more than one
    /// significant digit.
    pub fn from_value(x: f64) -> Result<Self> {
        if !(x.is_finite() && x > 0.0) {
            return Err(invalid(format!("expected a positive value, got {x}")));
        }
        let mut b = -(x.log10().floor() as i32);
        let mut a = (x * 10f64.powi(b)).round();
        if a >= 10.0 {
            a = 1.0;
            b -= 1;
        } else if a < 1.0 {
            a = 9.0;
            b += 1;
        }
        let digit = Self::new(a as u8, b)?;
        if (digit.value() - x).abs() > 1e-12 * x {
            return Err(invalid(format!("{x} is not of the form a * 10^-b")));
        }
        Ok(digit)
    }
}

impl fmt::Display for OneDigit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}e{}", self.a, -self.b)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaSearchConfig {
    /// Largest admissible gap between stochastic and deterministic 0-1 error.
    pub threshold: f64,
    #[serde(default = "default_draws")]
    pub mc_weight_draws: usize,
    /// The search starts at exponent `b = -ceil(log10(start_guess))`.
    #[serde(default = "default_start")]
    pub start_guess: f64,
    #[serde(default = "default_floor")]
    pub floor: f64,
}

fn default_draws() -> usize {
    5
}

fn default_start() -> f64 {
    1.0
}

fn default_floor() -> f64 {
    1e-10
}

impl SigmaSearchConfig {
    pub fn new(threshold: f64) -> Self {
        Self {
            threshold,
            mc_weight_draws: default_draws(),
            start_guess: default_start(),
            floor: default_floor(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(invalid(format!("threshold must be positive, got {}", self.threshold)));
        }
        if self.mc_weight_draws == 0 {
            return Err(invalid("mc_weight_draws must be at least 1"));
        }
        if !(self.start_guess.is_finite() && self.start_guess > 0.0) {
            return Err(invalid("start_guess must be positive"));
        }
        if !(self.floor.is_finite() && self.floor > 0.0) {
            return Err(invalid("floor must be positive"));
        }
        Ok(())
    }

    pub fn start_exponent(&self) -> i32 {
        -(self.start_guess.log10().ceil() as i32)
    }
}

/// Mean 0-1 error of `mean + sigma * noise_k` over the noise rows.
fn stochastic_error(model: &ModelSpec, mean: &[f64], sigma: f64, noise: &[Vec<f64>], data: &Dataset) -> f64 {
    let errors: Vec<f64> = noise
        .par_iter()
        .map(|xi| {
            let w: Vec<f64> = mean.iter().zip(xi).map(|(m, e)| m + sigma * e).collect();
            model.zero_one_error(&w, data)
        })
        .collect();
    errors.iter().sum::<f64>() / errors.len() as f64
}

/// Largest `sigma = a * 10^-b` whose stochastic 0-1 error on `data`, averaged
/// over `mc_weight_draws` weight draws, is within `threshold` of
/// `reference_loss`. Exponents are scanned upward from the start exponent and
/// digits downward from 9. All sigmas share one noise draw seeded by `seed`.
pub fn sigma_search(
    model: &ModelSpec,
    mean: &[f64],
    reference_loss: f64,
    data: &Dataset,
    cfg: &SigmaSearchConfig,
    seed: u64,
) -> Result<OneDigit> {
    cfg.validate()?;
    if mean.len() != model.num_params() {
        return Err(Error::DimensionMismatch {
            expected: model.num_params(),
            got: mean.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<Vec<f64>> = (0..cfg.mc_weight_draws)
        .map(|_| (0..mean.len()).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let mut b = cfg.start_exponent();
    loop {
        for a in (1..=9u8).rev() {
            let digit = OneDigit { a, b };
            let sigma = digit.value();
            if sigma < cfg.floor {
                return Err(Error::SigmaSearchFailed {
                    floor: cfg.floor,
                    threshold: cfg.threshold,
                });
            }
            if (stochastic_error(model, mean, sigma, &noise, data) - reference_loss).abs() <= cfg.threshold {
                return Ok(digit);
            }
        }
        b += 1;
    }
}

/// The 27 values `a * 10^-b`, `a` in `1..=9`, `b` within one of the exponent
/// of `tilde`, ascending.
pub fn candidate_sigmas(tilde: OneDigit) -> Vec<OneDigit> {
    [tilde.b + 1, tilde.b, tilde.b - 1]
        .into_iter()
        .flat_map(|b| (1..=9).map(move |a| OneDigit { a, b }))
        .collect()
}

/// The minimizing candidate for one bound kind.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Choice {
    pub sigma: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sigma2Selection {
    pub delta_each: f64,
    /// One entry per bound kind, in the evaluator's output order.
    pub best: Vec<Choice>,
}

/// Evaluates every candidate at `delta_each = delta_total / (candidates *
/// bounds_per_candidate)` and keeps the minimizer of each of the
/// `bounds_per_candidate` outputs. Ties go to the larger sigma.
pub fn select_sigma2<F>(candidates: &[f64], evaluate: F, delta_total: f64, bounds_per_candidate: usize) -> Result<Sigma2Selection>
where
    F: Fn(f64, f64) -> Result<Vec<f64>>,
{
    if candidates.is_empty() {
        return Err(invalid("no sigma candidates"));
    }
    if bounds_per_candidate == 0 {
        return Err(invalid("bounds_per_candidate must be positive"));
    }
    let delta_each = split_delta(delta_total, candidates.len() * bounds_per_candidate)?;
    let mut best: Vec<Option<Choice>> = vec![None; bounds_per_candidate];
    for &sigma in candidates {
        let values = evaluate(sigma, delta_each)?;
        if values.len() != bounds_per_candidate {
            return Err(Error::DimensionMismatch {
                expected: bounds_per_candidate,
                got: values.len(),
            });
        }
        for (slot, &value) in best.iter_mut().zip(&values) {
            let better = match slot {
                None => true,
                Some(c) => value < c.value || (value == c.value && sigma > c.sigma),
            };
            if better {
                *slot = Some(Choice { sigma, value });
            }
        }
    }
    Ok(Sigma2Selection {
        delta_each,
        best: best.into_iter().map(|c| c.expect("candidates nonempty")).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{synth_dataset, SynthSpec};
    use proptest::prelude::*;

    #[test]
    fn one_digit_round_trip() {
        for b in -3..12 {
            for a in 1..=9 {
                let d = OneDigit { a, b };
                assert_eq!(OneDigit::from_value(d.value()).unwrap(), d);
            }
        }
        assert_eq!(OneDigit { a: 3, b: 3 }.value(), 0.003);
        assert!(OneDigit::from_value(0.0035).is_err());
        assert!(OneDigit::new(0, 1).is_err());
    }

    #[test]
    fn candidate_grid_examples() {
        let c = candidate_sigmas(OneDigit { a: 3, b: 3 });
        assert_eq!(c.len(), 27);
        assert_eq!(c[0].value(), 1e-4);
        assert_eq!(c[26].value(), 9e-2);
        assert!(c.contains(&OneDigit { a: 3, b: 3 }));
        assert!(c.windows(2).all(|p| p[0].value() < p[1].value()));
    }

    #[test]
    fn union_bound_split() {
        let cands: Vec<f64> = candidate_sigmas(OneDigit { a: 3, b: 3 }).iter().map(|d| d.value()).collect();
        let sel = select_sigma2(&cands, |s, _| Ok(vec![s, -s]), 0.05, 2).unwrap();
        assert!((sel.delta_each - 9.259259e-4).abs() < 1e-9);
        assert_eq!(sel.best[0].sigma, 1e-4);
        assert_eq!(sel.best[1].sigma, 9e-2);
        let single = select_sigma2(&[0.1], |_, _| Ok(vec![0.0, 0.0]), 0.05, 2).unwrap();
        assert_eq!(single.delta_each, 0.025);
    }

    #[test]
    fn ties_prefer_larger_sigma() {
        let sel = select_sigma2(&[0.1, 0.3, 0.2], |_, _| Ok(vec![1.0]), 0.05, 1).unwrap();
        assert_eq!(sel.best[0].sigma, 0.3);
    }

    #[test]
    fn exhaustive_scan_agrees_with_selection() {
        let cands: Vec<f64> = candidate_sigmas(OneDigit { a: 2, b: 2 }).iter().map(|d| d.value()).collect();
        let f = |s: f64| (s.ln() + 4.0).powi(2);
        let sel = select_sigma2(&cands, |s, _| Ok(vec![f(s)]), 0.05, 1).unwrap();
        let best = cands.iter().copied().fold(f64::INFINITY, |m, s| m.min(f(s)));
        assert_eq!(sel.best[0].value, best);
    }

    fn blobs() -> Dataset {
        synth_dataset(
            &SynthSpec {
                dim: 4,
                offset: 3.0,
                noise_std: 1.0,
                size: 300,
            },
            2,
        )
        .unwrap()
    }

    #[test]
    fn unit_threshold_returns_grid_maximum() {
        let model = ModelSpec::linear(4, 2);
        let w = vec![0.3; model.num_params()];
        let d = sigma_search(&model, &w, 0.0, &blobs(), &SigmaSearchConfig::new(1.0), 0).unwrap();
        assert_eq!(d, OneDigit { a: 9, b: 0 });
    }

    #[test]
    fn flat_classifier_accepts_every_sigma() {
        // one class always wins by a margin no perturbation can overturn
        let model = ModelSpec::linear(4, 2);
        let mut w = vec![0.0; model.num_params()];
        w[8] = 1e6;
        let data = blobs();
        let reference = model.zero_one_error(&w, &data);
        let d = sigma_search(&model, &w, reference, &data, &SigmaSearchConfig::new(1e-9), 3).unwrap();
        assert_eq!(d, OneDigit { a: 9, b: 0 });
    }

    #[test]
    fn impossible_threshold_fails_at_floor() {
        let model = ModelSpec::linear(4, 2);
        let w = vec![0.0; model.num_params()];
        let mut cfg = SigmaSearchConfig::new(1e-9);
        cfg.floor = 1e-3;
        // reference 0.9 is unreachable: every weight vector here errs on ~half
        let err = sigma_search(&model, &w, 0.9, &blobs(), &cfg, 0).unwrap_err();
        assert!(matches!(err, Error::SigmaSearchFailed { .. }));
    }

    proptest! {
        #[test]
        fn candidates_always_27_and_contain_tilde(a in 1u8..=9, b in -5i32..15) {
            let t = OneDigit { a, b };
            let c = candidate_sigmas(t);
            prop_assert_eq!(c.len(), 27);
            prop_assert!(c.contains(&t));
            prop_assert!(c.windows(2).all(|p| p[0].value() < p[1].value()));
        }
    }
}
