//! Python bindings. Parameter errors raise `ValueError`, computation failures
//! raise `RuntimeError`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cmi_bounds::bounds::{self, BoundInputs, BoundKind, InfoBudget, REFERENCE_GAMMA, REFERENCE_LAMBDA};
use cmi_bounds::gaussian::{self, IsotropicGaussian};
use cmi_bounds::io::{Delimiter, ResultTable, RunConfig};
use cmi_bounds::learners::{self, SgdConfig};
use cmi_bounds::pipeline::{self, OneDigit};
use cmi_bounds::subset::toy::{toy_sampler, ErmLearner, GibbsLearner, ToyDistribution, ZeroOneLoss};
use cmi_bounds::subset::{self, DiscreteSubsetModel, ExpInequality, PriorChoice, TailBound};
use cmi_bounds::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter(_) | Error::Infeasible { .. } | Error::Config(_) | Error::DimensionMismatch { .. } => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

#[pyfunction]
fn feasibility_lhs(lam: f64, gamma: f64) -> PyResult<f64> {
    bounds::feasibility_lhs(lam, gamma).map_err(py_err)
}

#[pyfunction]
fn is_feasible(lam: f64, gamma: f64) -> PyResult<bool> {
    Ok(bounds::feasibility_lhs(lam, gamma).map_err(py_err)? <= 0.0)
}

#[pyfunction]
#[pyo3(signature = (tolerance = 1e-12))]
fn max_feasible_lambda(tolerance: f64) -> PyResult<f64> {
    bounds::max_feasible_lambda(tolerance).map_err(py_err)
}

/// `(gamma_lo, gamma_hi)`, or `None` when no gamma works for `lam`.
#[pyfunction]
fn feasible_gamma_interval(lam: f64) -> PyResult<Option<(f64, f64)>> {
    bounds::feasible_gamma_interval(lam).map_err(py_err)
}

#[pyfunction]
fn split_delta(delta_total: f64, k: usize) -> PyResult<f64> {
    bounds::split_delta(delta_total, k).map_err(py_err)
}

/// Evaluates the bound named `kind` (e.g. `"fast-pacb"`). Returns a dict with
/// `value`, `vacuous` and `valid`.
#[pyfunction]
#[pyo3(signature = (kind, n, train_loss = 0.0, info = 0.0, delta = None, lam = REFERENCE_LAMBDA, gamma = REFERENCE_GAMMA, samplewise = None))]
#[allow(clippy::too_many_arguments)]
fn bound<'py>(
    py: Python<'py>,
    kind: &str,
    n: usize,
    train_loss: f64,
    info: f64,
    delta: Option<f64>,
    lam: f64,
    gamma: f64,
    samplewise: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let kind: BoundKind = kind.parse().map_err(py_err)?;
    let inputs = BoundInputs {
        train_loss,
        info,
        samplewise: samplewise.unwrap_or_default(),
        n,
        delta,
        lambda: Some(lam),
        gamma: Some(gamma),
    };
    let r = bounds::evaluate(kind, &inputs).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("kind", kind.name())?;
    d.set_item("value", r.value)?;
    d.set_item("vacuous", r.vacuous())?;
    d.set_item("valid", r.valid)?;
    Ok(d)
}

/// Feasible `(lambda, gamma)` minimizing the fast-rate bound. `info_kind` is
/// one of `expected-kl`, `conditional-kl`, `info-density`, `cmi`.
#[pyfunction]
#[pyo3(signature = (train_loss, info, n, delta = 0.05, info_kind = "conditional-kl"))]
fn optimize_params(train_loss: f64, info: f64, n: usize, delta: f64, info_kind: &str) -> PyResult<(f64, f64)> {
    let budget = match info_kind {
        "expected-kl" => InfoBudget::ExpectedKl(info),
        "conditional-kl" => InfoBudget::ConditionalKl(info),
        "info-density" => InfoBudget::InfoDensity(info),
        "cmi" => InfoBudget::Cmi(info),
        other => return Err(PyValueError::new_err(format!("unknown info kind '{other}'"))),
    };
    let p = bounds::optimize_params(train_loss, &budget, n, delta).map_err(py_err)?;
    Ok((p.lambda, p.gamma))
}

#[pyclass(name = "IsotropicGaussian", frozen)]
struct PyGaussian {
    inner: IsotropicGaussian,
}

#[pymethods]
impl PyGaussian {
    #[new]
    fn new(mean: Vec<f64>, sigma: f64) -> PyResult<Self> {
        Ok(Self {
            inner: IsotropicGaussian::new(mean, sigma).map_err(py_err)?,
        })
    }

    #[getter]
    fn mean(&self) -> Vec<f64> {
        self.inner.mean().to_vec()
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn sample(&self, seed: u64) -> Vec<f64> {
        self.inner.sample(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// `D(self || other)`.
    fn kl(&self, other: &PyGaussian) -> PyResult<f64> {
        gaussian::kl_isotropic(&self.inner, &other.inner).map_err(py_err)
    }

    /// `log dself/dother` at `w`.
    fn log_density_ratio(&self, other: &PyGaussian, w: Vec<f64>) -> PyResult<f64> {
        gaussian::log_density_ratio(&self.inner, &other.inner, &w).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("IsotropicGaussian(dim={}, sigma={})", self.inner.dim(), self.inner.sigma())
    }
}

#[pyfunction]
#[pyo3(signature = (epoch, alpha0, decay_rate = 0.0, epoch_interval = 1))]
fn learning_rate(epoch: usize, alpha0: f64, decay_rate: f64, epoch_interval: usize) -> PyResult<f64> {
    let cfg = SgdConfig::decaying(alpha0, decay_rate, epoch_interval, 1, 1);
    cfg.validate().map_err(py_err)?;
    Ok(learners::learning_rate(epoch, &cfg))
}

/// The 27 prior-scale candidates around `a * 10^-b`, ascending.
#[pyfunction]
fn candidate_sigmas(a: u8, b: i32) -> PyResult<Vec<f64>> {
    let tilde = OneDigit::new(a, b).map_err(py_err)?;
    Ok(pipeline::candidate_sigmas(tilde).into_iter().map(OneDigit::value).collect())
}

fn toy_distribution(noise: f64) -> PyResult<ToyDistribution> {
    ToyDistribution::new(vec![1, 0, 1], noise).map_err(py_err)
}

/// Exact exponential moments on the three-feature toy problem, one per
/// sampled supersample. `which` is `fast`, `slow` or `interp`; `interp` uses a
/// realizable distribution and an ERM learner, the others a Gibbs learner.
#[pyfunction]
#[pyo3(signature = (which, n, supersamples = 5, seed = 0, beta = 2.0, lam = REFERENCE_LAMBDA, gamma = REFERENCE_GAMMA))]
#[allow(clippy::too_many_arguments)]
fn toy_exact_moments(
    py: Python<'_>,
    which: &str,
    n: usize,
    supersamples: usize,
    seed: u64,
    beta: f64,
    lam: f64,
    gamma: f64,
) -> PyResult<Vec<f64>> {
    let inequality = match which {
        "fast" => ExpInequality::fast(&bounds::BoundParams::new(lam, gamma, 1.0, n.max(1)).map_err(py_err)?)
            .map_err(py_err)?,
        "slow" => ExpInequality::SlowRate,
        "interp" => ExpInequality::Interpolating,
        other => return Err(PyValueError::new_err(format!("unknown inequality '{other}'"))),
    };
    let realizable = which == "interp";
    let dist = toy_distribution(if realizable { 0.0 } else { 0.1 })?;
    py.detach(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..supersamples)
            .map(|_| {
                let z = dist.sample_supersample(n, &mut rng);
                if realizable {
                    let l = ErmLearner::new(3)?;
                    subset::exact_exponential_moment(&l, &ZeroOneLoss, &z, &PriorChoice::TrueMarginal, inequality)
                } else {
                    let l = GibbsLearner::new(3, beta)?;
                    subset::exact_exponential_moment(&l, &ZeroOneLoss, &z, &PriorChoice::TrueMarginal, inequality)
                }
            })
            .collect::<cmi_bounds::Result<Vec<f64>>>()
    })
    .map_err(py_err)
}

/// Violation count of a high-probability bound on the toy problem with the
/// true-marginal prior. Returns `(violations, trials, allowed_rate, passes)`.
#[pyfunction]
#[pyo3(signature = (kind, n = 8, trials = 2000, delta = 0.05, seed = 0, beta = 2.0))]
fn toy_tail_coverage(
    py: Python<'_>,
    kind: &str,
    n: usize,
    trials: usize,
    delta: f64,
    seed: u64,
    beta: f64,
) -> PyResult<(usize, usize, f64, bool)> {
    let (lambda, gamma) = (REFERENCE_LAMBDA, REFERENCE_GAMMA);
    let tail = match kind {
        "slow-pacb" => TailBound::SlowPacb,
        "slow-sd" => TailBound::SlowSd,
        "fast-pacb" => TailBound::FastPacb { lambda, gamma },
        "fast-sd" => TailBound::FastSd { lambda, gamma },
        "interp-pacb" => TailBound::InterpPacb,
        "interp-sd" => TailBound::InterpSd,
        other => return Err(PyValueError::new_err(format!("unknown tail bound '{other}'"))),
    };
    let report = if kind.starts_with("interp") {
        let model = DiscreteSubsetModel::new(
            n,
            ErmLearner::new(3).map_err(py_err)?,
            ZeroOneLoss,
            toy_sampler(toy_distribution(0.0)?, n),
            PriorChoice::TrueMarginal,
        );
        py.detach(|| subset::tail_coverage(tail, &model, delta, trials, seed))
    } else {
        let model = DiscreteSubsetModel::new(
            n,
            GibbsLearner::new(3, beta).map_err(py_err)?,
            ZeroOneLoss,
            toy_sampler(toy_distribution(0.1)?, n),
            PriorChoice::TrueMarginal,
        );
        py.detach(|| subset::tail_coverage(tail, &model, delta, trials, seed))
    }
    .map_err(py_err)?;
    Ok((report.violations, report.trials, report.allowed_rate(), report.passes()))
}

/// Runs the experiment described by a TOML config and returns the result
/// table text. Relative IDX paths resolve against the working directory.
#[pyfunction]
#[pyo3(signature = (config_toml, seed = None, csv = false))]
fn run_experiment(py: Python<'_>, config_toml: &str, seed: Option<u64>, csv: bool) -> PyResult<String> {
    let cfg = RunConfig::from_toml(config_toml).map_err(py_err)?;
    let seed = seed
        .or(cfg.seed)
        .ok_or_else(|| PyValueError::new_err("no seed: pass one or set it in the config"))?;
    py.detach(|| {
        let data = cfg.dataset(seed)?;
        cfg.check_data_size(&data)?;
        let sweep = cfg.effective_sweep();
        let points = pipeline::run_sweep(&cfg.pipeline, &data, &sweep, seed)?;
        let table = ResultTable::from_reports(sweep.column(), &points)?;
        table.render(if csv { Delimiter::Comma } else { Delimiter::Space })
    })
    .map_err(py_err)
}

#[pymodule]
fn cmi_bounds_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(feasibility_lhs, m)?)?;
    m.add_function(wrap_pyfunction!(is_feasible, m)?)?;
    m.add_function(wrap_pyfunction!(max_feasible_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(feasible_gamma_interval, m)?)?;
    m.add_function(wrap_pyfunction!(split_delta, m)?)?;
    m.add_function(wrap_pyfunction!(bound, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_params, m)?)?;
    m.add_function(wrap_pyfunction!(learning_rate, m)?)?;
    m.add_function(wrap_pyfunction!(candidate_sigmas, m)?)?;
    m.add_function(wrap_pyfunction!(toy_exact_moments, m)?)?;
    m.add_function(wrap_pyfunction!(toy_tail_coverage, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_class::<PyGaussian>()?;
    m.add("REFERENCE_LAMBDA", REFERENCE_LAMBDA)?;
    m.add("REFERENCE_GAMMA", REFERENCE_GAMMA)?;
    Ok(())
}
