use std::ops::Range;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sigma::{candidate_sigmas, select_sigma2, sigma_search, OneDigit, SigmaSearchConfig};
use crate::bounds::{self, BoundParams, REFERENCE_GAMMA, REFERENCE_LAMBDA};
use crate::error::{invalid, Error, Result};
use crate::gaussian::{kl_isotropic, log_density_ratio, IsotropicGaussian};
use crate::learners::{sgd_train, Dataset, ModelSpec, SgdConfig};
use crate::subset::Mask;

const STREAM_MASK: u64 = 1;
const STREAM_TRAIN: u64 = 2;
const STREAM_PRIOR_SIGMA: u64 = 3;
const STREAM_POSTERIOR_SIGMA: u64 = 4;
const STREAM_LOSS_DRAWS: u64 = 5;

/// Independent 64-bit seed for `(stream, index)` under `master`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream((stream << 32) | (index & 0xffff_ffff));
    rng.next_u64()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    #[serde(default = "default_subsets")]
    pub num_subsets: usize,
}

fn default_subsets() -> usize {
    10
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            num_subsets: default_subsets(),
        }
    }
}

/// `k` windows of length `n` inside `0..2n`: the first starts at 0, the last
/// at `n`, the rest at `round(j n / (k - 1))`.
pub fn prior_windows(n: usize, k: usize) -> Vec<Range<usize>> {
    (0..k)
        .map(|j| {
            let start = if k == 1 {
                0
            } else {
                (j as f64 * n as f64 / (k - 1) as f64).round() as usize
            };
            start..start + n
        })
        .collect()
}

/// Coordinate-wise average of the weights trained on each subset. Every run
/// uses `sgd.seed`, so all networks share one initialization.
pub fn prior_mean(model: &ModelSpec, sgd: &SgdConfig, subsets: &[Dataset]) -> Result<Vec<f64>> {
    if subsets.is_empty() {
        return Err(invalid("prior needs at least one subset"));
    }
    let trained: Vec<Vec<f64>> = subsets
        .par_iter()
        .map(|d| sgd_train(model, d, sgd))
        .collect::<Result<_>>()?;
    let mut mean = vec![0.0; model.num_params()];
    for w in &trained {
        mean.iter_mut().zip(w).for_each(|(m, x)| *m += x);
    }
    let k = trained.len() as f64;
    mean.iter_mut().for_each(|m| *m /= k);
    Ok(mean)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorFit {
    pub mean: Vec<f64>,
    pub sigma_tilde: OneDigit,
    /// Deterministic 0-1 error of `mean` on the whole supersample.
    pub reference_loss: f64,
}

impl PriorFit {
    pub fn gaussian(&self) -> Result<IsotropicGaussian> {
        IsotropicGaussian::new(self.mean.clone(), self.sigma_tilde.value())
    }
}

/// Prior fitted on the `2n`-row supersample `z`; depends on `z` only.
pub fn build_prior(
    z: &Dataset,
    model: &ModelSpec,
    sgd: &SgdConfig,
    prior: &PriorConfig,
    sigma: &SigmaSearchConfig,
    seed: u64,
) -> Result<PriorFit> {
    if z.is_empty() || !z.len().is_multiple_of(2) {
        return Err(invalid(format!("supersample needs an even, nonzero size, got {}", z.len())));
    }
    if prior.num_subsets == 0 {
        return Err(invalid("num_subsets must be at least 1"));
    }
    let n = z.len() / 2;
    let subsets: Vec<Dataset> = prior_windows(n, prior.num_subsets)
        .into_iter()
        .map(|w| z.select(&w.collect::<Vec<_>>()))
        .collect();
    let mean = prior_mean(model, sgd, &subsets)?;
    let reference_loss = model.zero_one_error(&mean, z);
    let sigma_tilde = sigma_search(model, &mean, reference_loss, z, sigma, seed)?;
    Ok(PriorFit {
        mean,
        sigma_tilde,
        reference_loss,
    })
}

/// Settings for one point of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Training-set size; the supersample is the first `2n` rows of the data.
    pub n: usize,
    pub model: ModelSpec,
    /// `sgd.seed` is replaced by a seed derived from the master seed.
    pub sgd: SgdConfig,
    pub sigma: SigmaSearchConfig,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default = "default_delta")]
    pub delta_total: f64,
    /// Weight draws used to estimate the train and test losses.
    #[serde(default = "default_loss_draws")]
    pub loss_draws: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Also report single-draw bounds; this doubles the union-bound count.
    #[serde(default)]
    pub single_draw: bool,
}

fn default_replicas() -> usize {
    10
}

fn default_delta() -> f64 {
    0.05
}

fn default_loss_draws() -> usize {
    5
}

fn default_lambda() -> f64 {
    REFERENCE_LAMBDA
}

fn default_gamma() -> f64 {
    REFERENCE_GAMMA
}

impl PipelineConfig {
    pub fn new(n: usize, model: ModelSpec, sgd: SgdConfig, sigma: SigmaSearchConfig) -> Self {
        Self {
            n,
            model,
            sgd,
            sigma,
            prior: PriorConfig::default(),
            replicas: default_replicas(),
            delta_total: default_delta(),
            loss_draws: default_loss_draws(),
            lambda: default_lambda(),
            gamma: default_gamma(),
            single_draw: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(invalid("n must be at least 2"));
        }
        if self.replicas == 0 || self.loss_draws == 0 {
            return Err(invalid("replicas and loss_draws must be positive"));
        }
        self.model.validate()?;
        self.sgd.validate()?;
        self.sigma.validate()?;
        if self.prior.num_subsets == 0 {
            return Err(invalid("num_subsets must be at least 1"));
        }
        BoundParams::new(self.lambda, self.gamma, self.delta_total, self.n)?.ensure_feasible()
    }

    /// Bounds sharing the union bound at each sigma candidate.
    pub fn bounds_per_candidate(&self) -> usize {
        if self.single_draw {
            4
        } else {
            2
        }
    }
}

/// The bound value at the minimizing prior sigma.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChosenBound {
    pub sigma2: f64,
    pub kl: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaReport {
    pub replica: usize,
    pub mask_seed: u64,
    pub train_mean: f64,
    pub train_std: f64,
    pub test_mean: f64,
    pub test_std: f64,
    pub sigma1: f64,
    pub slow: ChosenBound,
    pub fast: ChosenBound,
    pub slow_single_draw: Option<ChosenBound>,
    pub fast_single_draw: Option<ChosenBound>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let k = values.len() as f64;
        let mean = values.iter().sum::<f64>() / k;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub train: Stat,
    pub test: Stat,
    pub slow: Stat,
    pub fast: Stat,
    pub slow_single_draw: Option<Stat>,
    pub fast_single_draw: Option<Stat>,
}

impl Aggregate {
    pub fn from_rows(rows: &[ReplicaReport]) -> Self {
        let col = |f: &dyn Fn(&ReplicaReport) -> f64| Stat::of(&rows.iter().map(f).collect::<Vec<_>>());
        let opt = |f: &dyn Fn(&ReplicaReport) -> Option<ChosenBound>| {
            rows.iter()
                .map(f)
                .collect::<Option<Vec<_>>>()
                .map(|v| Stat::of(&v.iter().map(|c| c.value).collect::<Vec<_>>()))
        };
        Self {
            train: col(&|r| r.train_mean),
            test: col(&|r| r.test_mean),
            slow: col(&|r| r.slow.value),
            fast: col(&|r| r.fast.value),
            slow_single_draw: opt(&|r| r.slow_single_draw),
            fast_single_draw: opt(&|r| r.fast_single_draw),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: PipelineConfig,
    pub seed: u64,
    pub training_seed: u64,
    pub prior_sigma_tilde: f64,
    pub delta_total: f64,
    pub delta_each: f64,
    pub bounds_per_candidate: usize,
    pub num_candidates: usize,
    pub replicas: Vec<ReplicaReport>,
    pub aggregate: Aggregate,
}

/// Shared, replica-independent state.
struct Setup<'a> {
    cfg: &'a PipelineConfig,
    z: Dataset,
    sgd: SgdConfig,
    prior_mean: Vec<f64>,
    candidates: Vec<f64>,
    seed: u64,
}

/// Runs the full experiment on the first `2n` rows of `data`.
pub fn run_experiment(cfg: &PipelineConfig, data: &Dataset, seed: u64) -> Result<ExperimentReport> {
    cfg.validate()?;
    cfg.model.check_data(data)?;
    let z = data.head(2 * cfg.n)?;
    let training_seed = derive_seed(seed, STREAM_TRAIN, 0);
    let sgd = SgdConfig {
        seed: training_seed,
        ..cfg.sgd.clone()
    };
    let prior = build_prior(
        &z,
        &cfg.model,
        &sgd,
        &cfg.prior,
        &cfg.sigma,
        derive_seed(seed, STREAM_PRIOR_SIGMA, 0),
    )?;
    let candidates: Vec<f64> = candidate_sigmas(prior.sigma_tilde).iter().map(|d| d.value()).collect();
    let setup = Setup {
        cfg,
        z,
        sgd,
        prior_mean: prior.mean,
        candidates,
        seed,
    };
    let rows = run_replicas(&setup)?;
    let bpc = cfg.bounds_per_candidate();
    Ok(ExperimentReport {
        config: cfg.clone(),
        seed,
        training_seed,
        prior_sigma_tilde: prior.sigma_tilde.value(),
        delta_total: cfg.delta_total,
        delta_each: bounds::split_delta(cfg.delta_total, setup.candidates.len() * bpc)?,
        bounds_per_candidate: bpc,
        num_candidates: setup.candidates.len(),
        aggregate: Aggregate::from_rows(&rows),
        replicas: rows,
    })
}

fn run_replicas(setup: &Setup<'_>) -> Result<Vec<ReplicaReport>> {
    (0..setup.cfg.replicas)
        .into_par_iter()
        .map(|r| {
            run_replica(setup, r).map_err(|e| Error::Replica {
                replica: r,
                source: Box::new(e),
            })
        })
        .collect()
}

fn run_replica(setup: &Setup<'_>, r: usize) -> Result<ReplicaReport> {
    let cfg = setup.cfg;
    let n = cfg.n;
    let mask_seed = derive_seed(setup.seed, STREAM_MASK, r as u64);
    let mask = Mask::random(n, &mut ChaCha8Rng::seed_from_u64(mask_seed));
    let train = setup.z.select(&mask.train_indices());
    let test = setup.z.select(&mask.test_indices());

    let mu1 = sgd_train(&cfg.model, &train, &setup.sgd)?;
    let reference = cfg.model.zero_one_error(&mu1, &train);
    let sigma1 = sigma_search(
        &cfg.model,
        &mu1,
        reference,
        &train,
        &cfg.sigma,
        derive_seed(setup.seed, STREAM_POSTERIOR_SIGMA, r as u64),
    )?
    .value();
    let posterior = IsotropicGaussian::new(mu1, sigma1)?;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(setup.seed, STREAM_LOSS_DRAWS, r as u64));
    let mut train_losses = Vec::with_capacity(cfg.loss_draws);
    let mut test_losses = Vec::with_capacity(cfg.loss_draws);
    for _ in 0..cfg.loss_draws {
        let w = posterior.sample(&mut rng);
        train_losses.push(cfg.model.zero_one_error(&w, &train));
        test_losses.push(cfg.model.zero_one_error(&w, &test));
    }
    let train_stat = Stat::of(&train_losses);
    let test_stat = Stat::of(&test_losses);
    let single = if cfg.single_draw {
        let w = posterior.sample(&mut rng);
        let loss = cfg.model.zero_one_error(&w, &train);
        Some((w, loss))
    } else {
        None
    };

    let kl_at = |sigma2: f64| -> Result<(IsotropicGaussian, f64)> {
        let prior = IsotropicGaussian::new(setup.prior_mean.clone(), sigma2)?;
        let kl = kl_isotropic(&posterior, &prior)?;
        Ok((prior, kl))
    };
    let selection = select_sigma2(
        &setup.candidates,
        |sigma2, delta| {
            let (prior, kl) = kl_at(sigma2)?;
            let params = BoundParams::new(cfg.lambda, cfg.gamma, delta, n)?;
            let mut values = vec![
                bounds::slow_pacb(train_stat.mean, kl, n, delta)?.value,
                bounds::fast_pacb(train_stat.mean, kl, &params)?.value,
            ];
            if let Some((w, loss)) = &single {
                let ratio = log_density_ratio(&posterior, &prior, w)?;
                values.push(bounds::slow_sd(*loss, ratio, n, delta)?.value);
                values.push(bounds::fast_sd(*loss, ratio, &params)?.value);
            }
            Ok(values)
        },
        cfg.delta_total,
        cfg.bounds_per_candidate(),
    )?;
    let chosen = |k: usize| -> Result<ChosenBound> {
        let c = selection.best[k];
        Ok(ChosenBound {
            sigma2: c.sigma,
            kl: kl_at(c.sigma)?.1,
            value: c.value,
        })
    };
    Ok(ReplicaReport {
        replica: r,
        mask_seed,
        train_mean: train_stat.mean,
        train_std: train_stat.std,
        test_mean: test_stat.mean,
        test_std: test_stat.std,
        sigma1,
        slow: chosen(0)?,
        fast: chosen(1)?,
        slow_single_draw: single.as_ref().map(|_| chosen(2)).transpose()?,
        fast_single_draw: single.as_ref().map(|_| chosen(3)).transpose()?,
    })
}

/// Sweep variable of a multi-point experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variable", content = "values", rename_all = "lowercase")]
pub enum Sweep {
    /// Training epochs; each point trains from scratch, so with a fixed seed
    /// it matches the epoch-`E` iterate of a longer run.
    Epochs(Vec<usize>),
    /// Training-set size; the supersample grows as a prefix of the data.
    N(Vec<usize>),
}

impl Sweep {
    pub fn column(&self) -> &'static str {
        match self {
            Sweep::Epochs(_) => "E",
            Sweep::N(_) => "n",
        }
    }

    pub fn values(&self) -> &[usize] {
        match self {
            Sweep::Epochs(v) | Sweep::N(v) => v,
        }
    }
}

/// One report per sweep value, all under the same master seed.
pub fn run_sweep(cfg: &PipelineConfig, data: &Dataset, sweep: &Sweep, seed: u64) -> Result<Vec<(usize, ExperimentReport)>> {
    sweep
        .values()
        .iter()
        .map(|&v| {
            let mut point = cfg.clone();
            match sweep {
                Sweep::Epochs(_) => point.sgd.epochs = v,
                Sweep::N(_) => point.n = v,
            }
            run_experiment(&point, data, seed).map(|r| (v, r))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{synth_dataset, SynthSpec};

    fn data(size: usize, offset: f64) -> Dataset {
        synth_dataset(
            &SynthSpec {
                dim: 5,
                offset,
                noise_std: 1.0,
                size,
            },
            17,
        )
        .unwrap()
    }

    fn config(n: usize, threshold: f64) -> PipelineConfig {
        let mut c = PipelineConfig::new(
            n,
            ModelSpec::linear(5, 2),
            SgdConfig::momentum(0.05, 0.9, 32, 10),
            SigmaSearchConfig::new(threshold),
        );
        c.replicas = 3;
        c
    }

    #[test]
    fn windows_cover_both_ends() {
        let w = prior_windows(100, 10);
        assert_eq!(w[0], 0..100);
        assert_eq!(w[9], 100..200);
        assert_eq!(w[1].start, 11);
        assert!(w.windows(2).all(|p| p[0].start < p[1].start));
        assert_eq!(prior_windows(7, 1), vec![0..7]);
    }

    #[test]
    fn single_subset_prior_equals_posterior_mean() {
        let d = data(40, 2.0);
        let model = ModelSpec::linear(5, 2);
        let sgd = SgdConfig::momentum(0.05, 0.9, 8, 5).with_seed(4);
        let w = sgd_train(&model, &d, &sgd).unwrap();
        assert_eq!(prior_mean(&model, &sgd, std::slice::from_ref(&d)).unwrap(), w);
    }

    #[test]
    fn identical_subsets_average_to_common_weights() {
        let d = data(40, 2.0);
        let model = ModelSpec::linear(5, 2);
        let sgd = SgdConfig::momentum(0.05, 0.9, 8, 5).with_seed(4);
        let w = sgd_train(&model, &d, &sgd).unwrap();
        let m = prior_mean(&model, &sgd, &vec![d; 10]).unwrap();
        assert!(m.iter().zip(&w).all(|(a, b)| (a - b).abs() <= 1e-15 * b.abs().max(1.0)));
    }

    #[test]
    fn data_dependent_prior_beats_zero_mean_prior() {
        let d = data(400, 2.0);
        let cfg = config(200, 0.05);
        let z = d.head(400).unwrap();
        let sgd = cfg.sgd.clone().with_seed(1);
        let prior = build_prior(&z, &cfg.model, &sgd, &cfg.prior, &cfg.sigma, 2).unwrap();
        let mask = Mask::random(200, &mut ChaCha8Rng::seed_from_u64(3));
        let mu1 = sgd_train(&cfg.model, &z.select(&mask.train_indices()), &sgd).unwrap();
        let sigma = prior.sigma_tilde.value();
        let post = IsotropicGaussian::new(mu1.clone(), sigma).unwrap();
        let kl = kl_isotropic(&post, &prior.gaussian().unwrap()).unwrap();
        let zero = IsotropicGaussian::new(vec![0.0; mu1.len()], sigma).unwrap();
        let kl_zero = kl_isotropic(&post, &zero).unwrap();
        assert!(kl.is_finite() && kl < kl_zero, "{kl} vs {kl_zero}");
    }

    #[test]
    fn unit_threshold_gives_small_kl_and_finite_bounds() {
        let d = data(200, 2.0);
        let cfg = config(100, 1.0);
        let report = run_experiment(&cfg, &d, 5).unwrap();
        assert_eq!(report.prior_sigma_tilde, 9.0);
        for r in &report.replicas {
            assert_eq!(r.sigma1, 9.0);
            assert!(r.slow.value.is_finite() && r.fast.value.is_finite());
            assert!(r.slow.kl < 1.0, "{}", r.slow.kl);
        }
    }

    #[test]
    fn single_replica_has_zero_std() {
        let d = data(200, 2.0);
        let mut cfg = config(100, 0.05);
        cfg.replicas = 1;
        let report = run_experiment(&cfg, &d, 5).unwrap();
        assert_eq!(report.aggregate.train.std, 0.0);
        assert_eq!(report.aggregate.fast.std, 0.0);
    }

    #[test]
    fn replica_invariants_and_determinism() {
        let d = data(400, 2.0);
        let mut cfg = config(200, 0.05);
        cfg.single_draw = true;
        let a = run_experiment(&cfg, &d, 11).unwrap();
        let b = run_experiment(&cfg, &d, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.bounds_per_candidate, 4);
        assert!((a.delta_each - 0.05 / 108.0).abs() < 1e-18);
        for r in &a.replicas {
            assert!((0.0..=1.0).contains(&r.train_mean) && (0.0..=1.0).contains(&r.test_mean));
            for c in [r.slow, r.fast] {
                assert!(c.kl >= 0.0);
                OneDigit::from_value(c.sigma2).unwrap();
                // union-bound cost is nonnegative
                let params = BoundParams::new(cfg.lambda, cfg.gamma, cfg.delta_total, cfg.n).unwrap();
                assert!(r.slow.value >= bounds::slow_pacb(r.train_mean, r.slow.kl, cfg.n, cfg.delta_total).unwrap().value);
                assert!(r.fast.value >= bounds::fast_pacb(r.train_mean, r.fast.kl, &params).unwrap().value);
            }
            OneDigit::from_value(r.sigma1).unwrap();
            assert!(r.slow_single_draw.is_some() && r.fast_single_draw.is_some());
        }
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        assert_eq!(single.install(|| run_experiment(&cfg, &d, 11).unwrap()), a);
    }

    #[test]
    fn replica_failure_names_the_replica() {
        let d = data(200, 2.0);
        // the prior search runs before any replica and is not wrapped
        let mut cfg = config(100, 1e-9);
        cfg.sigma.floor = 0.5;
        let r = run_experiment(&cfg, &d, 1);
        assert!(matches!(r, Err(Error::SigmaSearchFailed { .. })), "{r:?}");
        let cfg = config(100, 1.0);
        let setup = Setup {
            cfg: &cfg,
            z: d.head(200).unwrap(),
            sgd: cfg.sgd.clone(),
            prior_mean: vec![0.0; 3],
            candidates: vec![0.1],
            seed: 0,
        };
        match run_replicas(&setup) {
            Err(Error::Replica { source, .. }) => assert!(matches!(*source, Error::DimensionMismatch { .. })),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sweep_changes_only_the_swept_field() {
        let d = data(400, 2.0);
        let mut cfg = config(100, 0.05);
        cfg.replicas = 2;
        let rows = run_sweep(&cfg, &d, &Sweep::N(vec![50, 100]), 3).unwrap();
        assert_eq!(rows[0].0, 50);
        assert_eq!(rows[1].1, run_experiment(&cfg, &d, 3).unwrap());
        assert_eq!(Sweep::Epochs(vec![]).column(), "E");
    }
}
