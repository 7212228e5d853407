//! Numerical checks of the exponential-moment inequalities behind the bounds,
//! and empirical tail coverage of the high-probability bounds.
//!
//! Three inequalities are covered, each of the form `E[exp(X)] <= 1` under
//! `P_{W Z~ S}` with `r = log dP_{W|Z~S}/dQ_{W|Z~}`:
//!
//! * fast rate: `X = lambda n (L_test - gamma L_train) - r`, for feasible
//!   `(lambda, gamma)`;
//! * slow rate: `X = (n - 1)/2 (L_test - L_train)^2 - log sqrt(n) - r`;
//! * interpolating: `X = n log 2 L_test - r`, when `L_train = 0` almost surely.
//!
//! For discrete learners and `n <= 20` the expectation for a fixed supersample
//! is computed exactly. Otherwise it is estimated by Monte Carlo and accepted
//! when `mean - 3 SE <= 1`.

use std::f64::consts::LN_2;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::function::erf::erfc;

use super::enumerate::{enumerate_marginal, fold_masks, posterior_for};
use super::{discrete_kl, empirical_loss, DiscreteLearner, LossFunction, Mask, Supersample};
use crate::bounds::{self, BoundParams};
use crate::error::{invalid, Error, Result};
use crate::gaussian::{kl_isotropic, log_density_ratio, IsotropicGaussian};

/// Which exponential inequality to check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExpInequality {
    FastRate { lambda: f64, gamma: f64 },
    SlowRate,
    Interpolating,
}

impl ExpInequality {
    /// Fast-rate inequality; rejects infeasible parameters.
    pub fn fast(params: &BoundParams) -> Result<Self> {
        params.ensure_feasible()?;
        Ok(Self::FastRate {
            lambda: params.lambda,
            gamma: params.gamma,
        })
    }

    pub fn exponent(&self, n: usize, train: f64, test: f64, log_ratio: f64) -> f64 {
        let nf = n as f64;
        match *self {
            ExpInequality::FastRate { lambda, gamma } => lambda * nf * (test - gamma * train) - log_ratio,
            ExpInequality::SlowRate => {
                let gap = test - train;
                0.5 * (nf - 1.0) * gap * gap - 0.5 * nf.ln() - log_ratio
            }
            ExpInequality::Interpolating => nf * LN_2 * test - log_ratio,
        }
    }

    pub fn requires_interpolation(&self) -> bool {
        matches!(self, ExpInequality::Interpolating)
    }

    pub fn name(&self) -> &'static str {
        match self {
            ExpInequality::FastRate { .. } => "fast-rate",
            ExpInequality::SlowRate => "slow-rate",
            ExpInequality::Interpolating => "interpolating",
        }
    }
}

/// The prior `Q_{W|Z~}` used in the log-ratio.
#[derive(Clone, Debug, PartialEq)]
pub enum PriorChoice {
    /// The exact marginal `P_{W|Z~}`, by enumeration.
    TrueMarginal,
    /// A fixed distribution over hypotheses (must not depend on `S`).
    Fixed(Vec<f64>),
}

impl PriorChoice {
    fn resolve<Z, L>(&self, learner: &L, supersample: &Supersample<Z>) -> Result<Vec<f64>>
    where
        Z: Sync,
        L: DiscreteLearner<Z> + Sync + ?Sized,
    {
        match self {
            PriorChoice::TrueMarginal => enumerate_marginal(learner, supersample),
            PriorChoice::Fixed(q) => {
                super::check_distribution(q, learner.num_hypotheses())?;
                Ok(q.clone())
            }
        }
    }
}

fn interpolation_violation(hypothesis: impl ToString, train_loss: f64, mask: &Mask) -> Error {
    Error::InterpolationViolation {
        hypothesis: hypothesis.to_string(),
        train_loss,
        mask: mask.to_string(),
    }
}

/// Exact `E_{S, W}[exp(X)]` for a fixed supersample, enumerating all masks.
pub fn exact_exponential_moment<Z, L, Lo>(
    learner: &L,
    loss: &Lo,
    supersample: &Supersample<Z>,
    prior: &PriorChoice,
    inequality: ExpInequality,
) -> Result<f64>
where
    Z: Sync,
    L: DiscreteLearner<Z> + Sync + ?Sized,
    Lo: LossFunction<usize, Z> + Sync + ?Sized,
{
    let n = supersample.n();
    let q = prior.resolve(learner, supersample)?;
    let sum = fold_masks(
        n,
        |range| {
            let mut acc = 0.0;
            for code in range {
                let mask = Mask::from_code(code, n);
                let p = posterior_for(learner, supersample, &mask)?;
                let train_view = supersample.select(&mask)?;
                let test_view = supersample.select_complement(&mask)?;
                for (w, &pw) in p.iter().enumerate() {
                    if pw <= 0.0 {
                        continue;
                    }
                    if q[w] <= 0.0 {
                        return Err(Error::SupportMismatch(w));
                    }
                    let train = empirical_loss(&w, &train_view, loss);
                    if inequality.requires_interpolation() && train > 0.0 {
                        return Err(interpolation_violation(w, train, &mask));
                    }
                    let test = empirical_loss(&w, &test_view, loss);
                    let r = (pw / q[w]).ln();
                    acc += pw * inequality.exponent(n, train, test, r).exp();
                }
            }
            Ok(acc)
        },
        |a, b| a + b,
    )?
    .expect("at least one mask");
    Ok(sum / (1u64 << n) as f64)
}

/// One draw of `(Z~, S, W)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SingleDraw {
    pub train_loss: f64,
    pub test_loss: f64,
    /// `log dP_{W|Z~S}/dQ_{W|Z~}` at the drawn `W`.
    pub log_ratio: f64,
}

/// One draw of `(Z~, S)` with posterior-averaged losses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PacBayesDraw {
    pub train_loss: f64,
    pub test_loss: f64,
    /// `D(P_{W|Z~S} || Q_{W|Z~})`.
    pub kl: f64,
}

/// A data distribution, learner and prior that can be sampled end to end.
pub trait RandomSubsetModel: Sync {
    fn n(&self) -> usize;
    fn draw_single(&self, rng: &mut dyn RngCore) -> Result<SingleDraw>;
    fn draw_pac_bayes(&self, rng: &mut dyn RngCore) -> Result<PacBayesDraw>;
}

type Setup<Z> = (Supersample<Z>, Mask, Vec<f64>, Vec<f64>);

type Sampler<Z> = Box<dyn Fn(&mut dyn RngCore) -> Supersample<Z> + Send + Sync>;

/// Discrete learner over a sampled supersample.
pub struct DiscreteSubsetModel<Z, L, Lo> {
    n: usize,
    learner: L,
    loss: Lo,
    sampler: Sampler<Z>,
    prior: PriorChoice,
}

impl<Z, L, Lo> DiscreteSubsetModel<Z, L, Lo>
where
    Z: Sync,
    L: DiscreteLearner<Z> + Sync,
    Lo: LossFunction<usize, Z> + Sync,
{
    pub fn new(
        n: usize,
        learner: L,
        loss: Lo,
        sampler: impl Fn(&mut dyn RngCore) -> Supersample<Z> + Send + Sync + 'static,
        prior: PriorChoice,
    ) -> Self {
        Self {
            n,
            learner,
            loss,
            sampler: Box::new(sampler),
            prior,
        }
    }

    pub fn learner(&self) -> &L {
        &self.learner
    }

    pub fn loss(&self) -> &Lo {
        &self.loss
    }

    pub fn prior(&self) -> &PriorChoice {
        &self.prior
    }

    pub fn sample_supersample(&self, rng: &mut dyn RngCore) -> Result<Supersample<Z>> {
        let z = (self.sampler)(rng);
        if z.n() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: z.n(),
            });
        }
        Ok(z)
    }

    /// Supersample, mask, posterior and prior.
    fn setup(&self, rng: &mut dyn RngCore) -> Result<Setup<Z>> {
        let z = self.sample_supersample(rng)?;
        let mask = Mask::random(self.n, rng);
        let p = posterior_for(&self.learner, &z, &mask)?;
        let q = self.prior.resolve(&self.learner, &z)?;
        Ok((z, mask, p, q))
    }
}

impl<Z, L, Lo> RandomSubsetModel for DiscreteSubsetModel<Z, L, Lo>
where
    Z: Sync,
    L: DiscreteLearner<Z> + Sync,
    Lo: LossFunction<usize, Z> + Sync,
{
    fn n(&self) -> usize {
        self.n
    }

    fn draw_single(&self, rng: &mut dyn RngCore) -> Result<SingleDraw> {
        let (z, mask, p, q) = self.setup(rng)?;
        let w = WeightedIndex::new(&p)
            .map_err(|e| invalid(format!("bad posterior: {e}")))?
            .sample(rng);
        if q[w] <= 0.0 {
            return Err(Error::SupportMismatch(w));
        }
        Ok(SingleDraw {
            train_loss: empirical_loss(&w, &z.select(&mask)?, &self.loss),
            test_loss: empirical_loss(&w, &z.select_complement(&mask)?, &self.loss),
            log_ratio: (p[w] / q[w]).ln(),
        })
    }

    fn draw_pac_bayes(&self, rng: &mut dyn RngCore) -> Result<PacBayesDraw> {
        let (z, mask, p, q) = self.setup(rng)?;
        let train_view = z.select(&mask)?;
        let test_view = z.select_complement(&mask)?;
        let (mut train, mut test) = (0.0, 0.0);
        for (w, &pw) in p.iter().enumerate() {
            if pw > 0.0 {
                train += pw * empirical_loss(&w, &train_view, &self.loss);
                test += pw * empirical_loss(&w, &test_view, &self.loss);
            }
        }
        Ok(PacBayesDraw {
            train_loss: train,
            test_loss: test,
            kl: discrete_kl(&p, &q)?,
        })
    }
}

/// Linear classifiers on two Gaussian classes with isotropic Gaussian
/// posterior and prior.
///
/// Instances are `(x, y)` with `y = ±1` equiprobable and `x ~ N(y * signal, I)`.
/// The posterior is `N(mean of y x over Z(S), sigma_post^2 I)` and the prior is
/// `N(mean of y x over Z~, sigma_prior^2 I)`. The loss is the 0-1 error of
/// `sign(w . x)`.
#[derive(Clone, Debug)]
pub struct GaussianSubsetModel {
    pub n: usize,
    pub signal: Vec<f64>,
    pub sigma_posterior: f64,
    pub sigma_prior: f64,
    /// When set, the posterior mean is the prior mean (`P = Q` if the sigmas match).
    pub posterior_ignores_mask: bool,
}

#[derive(Clone, Debug)]
struct LabeledPoint {
    x: Vec<f64>,
    y: f64,
}

fn phi(t: f64) -> f64 {
    0.5 * erfc(-t / std::f64::consts::SQRT_2)
}

impl GaussianSubsetModel {
    fn sample_point(&self, rng: &mut dyn RngCore) -> LabeledPoint {
        let y = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let x = self
            .signal
            .iter()
            .map(|&s| {
                let e: f64 = rng.sample(StandardNormal);
                y * s + e
            })
            .collect();
        LabeledPoint { x, y }
    }

    fn mean_yx(points: &[&LabeledPoint], d: usize) -> Vec<f64> {
        let mut m = vec![0.0; d];
        for p in points {
            m.iter_mut().zip(&p.x).for_each(|(a, x)| *a += p.y * x);
        }
        let k = points.len() as f64;
        m.into_iter().map(|v| v / k).collect()
    }

    fn setup(&self, rng: &mut dyn RngCore) -> Result<(Supersample<LabeledPoint>, Mask, IsotropicGaussian, IsotropicGaussian)> {
        let d = self.signal.len();
        let z = Supersample::new((0..2 * self.n).map(|_| self.sample_point(rng)).collect())?;
        let mask = Mask::random(self.n, rng);
        let all: Vec<&LabeledPoint> = z.samples().iter().collect();
        let prior_mean = Self::mean_yx(&all, d);
        let post_mean = if self.posterior_ignores_mask {
            prior_mean.clone()
        } else {
            Self::mean_yx(&z.select(&mask)?, d)
        };
        Ok((
            z,
            mask,
            IsotropicGaussian::new(post_mean, self.sigma_posterior)?,
            IsotropicGaussian::new(prior_mean, self.sigma_prior)?,
        ))
    }
}

// the hypothesis type is `Vec<f64>`, so the loss takes it by reference
#[allow(clippy::ptr_arg)]
fn zero_one(w: &Vec<f64>, z: &LabeledPoint) -> f64 {
    let margin: f64 = z.y * w.iter().zip(&z.x).map(|(a, b)| a * b).sum::<f64>();
    f64::from(u8::from(margin <= 0.0))
}

/// `P_{w ~ N(mu, s^2 I)}(y w.x <= 0)`.
fn gibbs_zero_one(post: &IsotropicGaussian, z: &LabeledPoint) -> f64 {
    let mean_margin: f64 = z.y * post.mean().iter().zip(&z.x).map(|(a, b)| a * b).sum::<f64>();
    let norm = z.x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return 1.0;
    }
    phi(-mean_margin / (post.sigma() * norm))
}

impl RandomSubsetModel for GaussianSubsetModel {
    fn n(&self) -> usize {
        self.n
    }

    fn draw_single(&self, rng: &mut dyn RngCore) -> Result<SingleDraw> {
        let (z, mask, post, prior) = self.setup(rng)?;
        let w = post.sample(rng);
        Ok(SingleDraw {
            train_loss: empirical_loss(&w, &z.select(&mask)?, &zero_one),
            test_loss: empirical_loss(&w, &z.select_complement(&mask)?, &zero_one),
            log_ratio: log_density_ratio(&post, &prior, &w)?,
        })
    }

    fn draw_pac_bayes(&self, rng: &mut dyn RngCore) -> Result<PacBayesDraw> {
        let (z, mask, post, prior) = self.setup(rng)?;
        let avg = |view: Vec<&LabeledPoint>| view.iter().map(|p| gibbs_zero_one(&post, p)).sum::<f64>() / view.len() as f64;
        Ok(PacBayesDraw {
            train_loss: avg(z.select(&mask)?),
            test_loss: avg(z.select_complement(&mask)?),
            kl: kl_isotropic(&post, &prior)?,
        })
    }
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Monte-Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub trials: usize,
}

impl McEstimate {
    pub fn from_values(values: &[f64]) -> Self {
        let k = values.len() as f64;
        let mean = values.iter().sum::<f64>() / k;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            std_error: (var / k).sqrt(),
            trials: values.len(),
        }
    }

    /// One-sided 3-SE acceptance of `E <= 1`.
    pub fn passes(&self) -> bool {
        self.mean - 3.0 * self.std_error <= 1.0
    }
}

/// Monte-Carlo estimate of `E[exp(X)]` over fresh `(Z~, S, W)` draws. Trial
/// `t` uses its own ChaCha stream, so results do not depend on thread count.
pub fn mc_verify<M: RandomSubsetModel + ?Sized>(
    model: &M,
    inequality: ExpInequality,
    trials: usize,
    seed: u64,
) -> Result<McEstimate> {
    if trials == 0 {
        return Err(invalid("need at least one trial"));
    }
    let n = model.n();
    let values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let d = model.draw_single(&mut rng)?;
            if inequality.requires_interpolation() && d.train_loss > 0.0 {
                return Err(Error::InterpolationViolation {
                    hypothesis: format!("draw {t}"),
                    train_loss: d.train_loss,
                    mask: "(sampled)".into(),
                });
            }
            Ok(inequality.exponent(n, d.train_loss, d.test_loss, d.log_ratio).exp())
        })
        .collect::<Result<_>>()?;
    Ok(McEstimate::from_values(&values))
}

/// High-probability bound checked by [`tail_coverage`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TailBound {
    SlowPacb,
    SlowSd,
    FastPacb { lambda: f64, gamma: f64 },
    FastSd { lambda: f64, gamma: f64 },
    InterpPacb,
    InterpSd,
}

impl TailBound {
    fn is_single_draw(&self) -> bool {
        matches!(self, TailBound::SlowSd | TailBound::FastSd { .. } | TailBound::InterpSd)
    }

    fn is_interpolating(&self) -> bool {
        matches!(self, TailBound::InterpPacb | TailBound::InterpSd)
    }

    fn value(&self, train: f64, info: f64, n: usize, delta: f64) -> Result<f64> {
        let fast = |lambda, gamma| BoundParams::new(lambda, gamma, delta, n);
        Ok(match *self {
            TailBound::SlowPacb => bounds::slow_pacb(train, info, n, delta)?.value,
            TailBound::SlowSd => bounds::slow_sd(train, info, n, delta)?.value,
            TailBound::FastPacb { lambda, gamma } => bounds::fast_pacb(train, info, &fast(lambda, gamma)?)?.value,
            TailBound::FastSd { lambda, gamma } => bounds::fast_sd(train, info, &fast(lambda, gamma)?)?.value,
            TailBound::InterpPacb => bounds::interp_pacb(info, n, delta)?.value,
            TailBound::InterpSd => bounds::interp_sd(info, n, delta)?.value,
        })
    }
}

/// Empirical violation frequency of a `1 - delta` bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailReport {
    pub violations: usize,
    pub trials: usize,
    pub delta: f64,
}

impl TailReport {
    pub fn rate(&self) -> f64 {
        self.violations as f64 / self.trials as f64
    }

    /// `delta + 3 sqrt(delta (1 - delta) / trials)`.
    pub fn allowed_rate(&self) -> f64 {
        self.delta + 3.0 * (self.delta * (1.0 - self.delta) / self.trials as f64).sqrt()
    }

    pub fn passes(&self) -> bool {
        self.rate() <= self.allowed_rate()
    }
}

/// Draws `trials` independent instances and counts how often the realized
/// test loss (posterior-averaged for PAC-Bayesian kinds) exceeds the bound.
pub fn tail_coverage<M: RandomSubsetModel + ?Sized>(
    bound: TailBound,
    model: &M,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<TailReport> {
    if trials == 0 {
        return Err(invalid("need at least one trial"));
    }
    bounds::split_delta(delta, 1)?;
    let n = model.n();
    let violated: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let (train, test, info) = if bound.is_single_draw() {
                let d = model.draw_single(&mut rng)?;
                (d.train_loss, d.test_loss, d.log_ratio)
            } else {
                let d = model.draw_pac_bayes(&mut rng)?;
                (d.train_loss, d.test_loss, d.kl)
            };
            if bound.is_interpolating() && train > 0.0 {
                return Err(Error::InterpolationViolation {
                    hypothesis: format!("draw {t}"),
                    train_loss: train,
                    mask: "(sampled)".into(),
                });
            }
            Ok(test > bound.value(train, info, n, delta)?)
        })
        .collect::<Result<_>>()?;
    Ok(TailReport {
        violations: violated.iter().filter(|&&v| v).count(),
        trials,
        delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subset::toy::*;

    fn gibbs_model(n: usize, prior: PriorChoice) -> DiscreteSubsetModel<ToyInstance, GibbsLearner, ZeroOneLoss> {
        let dist = ToyDistribution::new(vec![0, 1, 1], 0.2).unwrap();
        DiscreteSubsetModel::new(n, GibbsLearner::new(3, 1.5).unwrap(), ZeroOneLoss, toy_sampler(dist, n), prior)
    }

    #[test]
    fn zero_loss_with_true_marginal_gives_one() {
        let dist = ToyDistribution::new(vec![0, 1, 1], 0.2).unwrap();
        let z = dist.sample_supersample(4, &mut trial_rng(2, 0));
        let zero = |_: &usize, _: &ToyInstance| 0.0;
        let fast = ExpInequality::fast(&BoundParams::reference(0.05, 4).unwrap()).unwrap();
        // full-support posterior: the change of measure is exact
        let gibbs = GibbsLearner::new(3, 2.0).unwrap();
        let v = exact_exponential_moment(&gibbs, &zero, &z, &PriorChoice::TrueMarginal, fast).unwrap();
        assert!((v - 1.0).abs() < 1e-12, "{v}");
        // sparse posteriors lose the mass outside their support
        let z = MaskMemorizer::supersample(3);
        let sparse = RandomTableLearner::new(5, 1);
        let v = exact_exponential_moment(&sparse, &zero, &z, &PriorChoice::TrueMarginal, fast).unwrap();
        assert!(v <= 1.0 + 1e-12, "{v}");
    }

    #[test]
    fn slow_rate_with_constant_loss_is_inverse_sqrt_n() {
        let n = 4;
        let z = MaskMemorizer::supersample(n);
        let learner = ConstantLearner::new(vec![0.5, 0.5]).unwrap();
        let constant = |_: &usize, _: &ToyInstance| 0.3;
        let v = exact_exponential_moment(&learner, &constant, &z, &PriorChoice::TrueMarginal, ExpInequality::SlowRate).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
    }

    #[test]
    fn interpolating_guard_trips() {
        let n = 3;
        let z = MaskMemorizer::supersample(n);
        let learner = MaskMemorizer::new(n);
        let always_wrong = |_: &usize, _: &ToyInstance| 1.0;
        let r = exact_exponential_moment(&learner, &always_wrong, &z, &PriorChoice::TrueMarginal, ExpInequality::Interpolating);
        assert!(matches!(r, Err(Error::InterpolationViolation { .. })));
        let v = exact_exponential_moment(&learner, &MemorizerLoss { n }, &z, &PriorChoice::TrueMarginal, ExpInequality::Interpolating).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_fast_inequality_rejected() {
        let p = BoundParams::new(0.5, 2.0, 0.05, 10).unwrap();
        assert!(ExpInequality::fast(&p).is_err());
    }

    #[test]
    fn fixed_prior_must_cover_posterior() {
        let z = MaskMemorizer::supersample(2);
        let learner = MaskMemorizer::new(2);
        let prior = PriorChoice::Fixed(vec![1.0, 0.0, 0.0, 0.0]);
        let r = exact_exponential_moment(&learner, &MemorizerLoss { n: 2 }, &z, &prior, ExpInequality::SlowRate);
        assert!(matches!(r, Err(Error::SupportMismatch(_))));
    }

    #[test]
    fn mc_matches_exact_in_expectation() {
        let model = gibbs_model(6, PriorChoice::TrueMarginal);
        let params = BoundParams::reference(0.05, 6).unwrap();
        let est = mc_verify(&model, ExpInequality::fast(&params).unwrap(), 4000, 5).unwrap();
        assert!(est.passes(), "{est:?}");
        let again = mc_verify(&model, ExpInequality::fast(&params).unwrap(), 4000, 5).unwrap();
        assert_eq!(est, again);
    }

    #[test]
    fn mc_is_thread_count_independent() {
        let model = gibbs_model(5, PriorChoice::TrueMarginal);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| mc_verify(&model, ExpInequality::SlowRate, 300, 9).unwrap());
        let b = three.install(|| mc_verify(&model, ExpInequality::SlowRate, 300, 9).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn gaussian_equal_pair_has_zero_log_ratio() {
        let model = GaussianSubsetModel {
            n: 20,
            signal: vec![1.0, 0.5],
            sigma_posterior: 0.3,
            sigma_prior: 0.3,
            posterior_ignores_mask: true,
        };
        let mut rng = trial_rng(1, 0);
        let d = model.draw_single(&mut rng).unwrap();
        assert_eq!(d.log_ratio, 0.0);
        let pb = model.draw_pac_bayes(&mut rng).unwrap();
        assert_eq!(pb.kl, 0.0);
        assert!((0.0..=1.0).contains(&pb.train_loss) && (0.0..=1.0).contains(&pb.test_loss));
    }

    #[test]
    fn tail_coverage_trivial_cases() {
        let model = gibbs_model(5, PriorChoice::TrueMarginal);
        let r = tail_coverage(TailBound::SlowPacb, &model, 1.0, 50, 3).unwrap();
        assert!(r.passes());
        assert_eq!(r.allowed_rate(), 1.0);

        let zero_model = DiscreteSubsetModel::new(
            5,
            GibbsLearner::new(3, 1.0).unwrap(),
            |_: &usize, _: &ToyInstance| 0.0,
            toy_sampler(ToyDistribution::new(vec![0, 0, 1], 0.1).unwrap(), 5),
            PriorChoice::TrueMarginal,
        );
        let r = tail_coverage(TailBound::FastSd { lambda: 1.0 / 2.98, gamma: 1.795 }, &zero_model, 0.05, 200, 4).unwrap();
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn tail_interp_guard() {
        let model = gibbs_model(5, PriorChoice::TrueMarginal);
        let r = tail_coverage(TailBound::InterpPacb, &model, 0.05, 20, 1);
        assert!(matches!(r, Err(Error::InterpolationViolation { .. })));
    }
}
