//! Closed-form loss bounds for the random-subset setting.
//!
//! Every information quantity is measured in nats. A bound is a loss value that
//! may exceed 1; such values are vacuous but are reported as computed, never
//! clamped.
//!
//! The fast-rate family depends on a pair `(lambda, gamma)` which must satisfy
//!
//! ```text
//! lambda (1 - gamma) + (e^lambda - 1 - lambda)(1 + gamma^2) <= 0
//! ```
//!
//! Read as a quadratic in `gamma`, the condition has real solutions only when
//! `lambda^2 - 4 (e^lambda - 1)(e^lambda - 1 - lambda) >= 0`, which puts every
//! usable `lambda` below roughly 0.3603.

use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// `lambda` used for the neural-network evaluations.
pub const REFERENCE_LAMBDA: f64 = 1.0 / 2.98;
/// `gamma` used for the neural-network evaluations.
pub const REFERENCE_GAMMA: f64 = 1.795;

/// The `(lambda, gamma)` pair under which the fast average bound reduces to
/// `2 L + 3 I / n`.
pub const STEINKE_LAMBDA: f64 = 1.0 / 3.0;
pub const STEINKE_GAMMA: f64 = 2.0;

/// Parameters of a fast-rate bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub lambda: f64,
    pub gamma: f64,
    /// Confidence parameter. `delta = 1` is accepted and makes the
    /// `log(1/delta)` term vanish.
    pub delta: f64,
    /// Training-set size.
    pub n: usize,
}

impl BoundParams {
    /// Validates ranges. Feasibility of `(lambda, gamma)` is checked separately
    /// by every fast-rate bound.
    pub fn new(lambda: f64, gamma: f64, delta: f64, n: usize) -> Result<Self> {
        check_lambda_gamma(lambda, gamma)?;
        check_delta(delta)?;
        if n == 0 {
            return Err(invalid("n must be at least 1"));
        }
        Ok(Self {
            lambda,
            gamma,
            delta,
            n,
        })
    }

    /// `lambda = 1/2.98`, `gamma = 1.795`.
    pub fn reference(delta: f64, n: usize) -> Result<Self> {
        Self::new(REFERENCE_LAMBDA, REFERENCE_GAMMA, delta, n)
    }

    /// `lambda = 1/3`, `gamma = 2`.
    pub fn steinke(delta: f64, n: usize) -> Result<Self> {
        Self::new(STEINKE_LAMBDA, STEINKE_GAMMA, delta, n)
    }

    pub fn feasibility_lhs(&self) -> f64 {
        lhs_unchecked(self.lambda, self.gamma)
    }

    pub fn is_feasible(&self) -> bool {
        self.feasibility_lhs() <= 0.0
    }

    pub fn ensure_feasible(&self) -> Result<()> {
        let lhs = self.feasibility_lhs();
        if lhs <= 0.0 {
            Ok(())
        } else {
            Err(Error::Infeasible {
                lambda: self.lambda,
                gamma: self.gamma,
                lhs,
            })
        }
    }

    pub fn with_delta(self, delta: f64) -> Result<Self> {
        Self::new(self.lambda, self.gamma, delta, self.n)
    }
}

/// An information measure feeding a bound, in nats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum InfoBudget {
    /// `E[D(P_{W|Z~S} || Q_{W|Z~})]`, for average bounds.
    ExpectedKl(f64),
    /// `D(P_{W|Z~S} || Q_{W|Z~})` at the realized `(Z~, S)`, for PAC-Bayesian bounds.
    ConditionalKl(f64),
    /// Information density (or its `log dP/dQ` proxy) at one draw; may be negative.
    InfoDensity(f64),
    /// `I(W; S | Z~)`.
    Cmi(f64),
    /// `I(W; S_i | Z~)` for `i = 1..n`.
    SamplewiseCmi(Vec<f64>),
}

impl InfoBudget {
    pub fn validate(&self) -> Result<()> {
        match self {
            InfoBudget::ExpectedKl(v) | InfoBudget::ConditionalKl(v) | InfoBudget::Cmi(v) => {
                check_info(*v)
            }
            InfoBudget::InfoDensity(v) => {
                if v.is_finite() {
                    Ok(())
                } else {
                    Err(invalid(format!("information density must be finite, got {v}")))
                }
            }
            InfoBudget::SamplewiseCmi(values) => values.iter().try_for_each(|v| check_info(*v)),
        }
    }

    /// Scalar total (the sum for samplewise terms).
    pub fn total(&self) -> f64 {
        match self {
            InfoBudget::ExpectedKl(v)
            | InfoBudget::ConditionalKl(v)
            | InfoBudget::InfoDensity(v)
            | InfoBudget::Cmi(v) => *v,
            InfoBudget::SamplewiseCmi(values) => values.iter().sum(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    SteinkeSlow,
    SteinkeFast,
    SlowPacb,
    SlowSd,
    FastAvg,
    FastPacb,
    FastSd,
    SamplewiseAvg,
    InterpAvg,
    InterpPacb,
    InterpSd,
    SamplewiseInterpAvg,
}

impl BoundKind {
    pub const ALL: [BoundKind; 12] = [
        BoundKind::SteinkeSlow,
        BoundKind::SteinkeFast,
        BoundKind::SlowPacb,
        BoundKind::SlowSd,
        BoundKind::FastAvg,
        BoundKind::FastPacb,
        BoundKind::FastSd,
        BoundKind::SamplewiseAvg,
        BoundKind::InterpAvg,
        BoundKind::InterpPacb,
        BoundKind::InterpSd,
        BoundKind::SamplewiseInterpAvg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundKind::SteinkeSlow => "steinke-slow",
            BoundKind::SteinkeFast => "steinke-fast",
            BoundKind::SlowPacb => "slow-pacb",
            BoundKind::SlowSd => "slow-sd",
            BoundKind::FastAvg => "fast-avg",
            BoundKind::FastPacb => "fast-pacb",
            BoundKind::FastSd => "fast-sd",
            BoundKind::SamplewiseAvg => "samplewise-avg",
            BoundKind::InterpAvg => "interp-avg",
            BoundKind::InterpPacb => "interp-pacb",
            BoundKind::InterpSd => "interp-sd",
            BoundKind::SamplewiseInterpAvg => "samplewise-interp-avg",
        }
    }

    pub fn uses_lambda_gamma(self) -> bool {
        matches!(
            self,
            BoundKind::FastAvg | BoundKind::FastPacb | BoundKind::FastSd | BoundKind::SamplewiseAvg
        )
    }

    pub fn uses_delta(self) -> bool {
        matches!(
            self,
            BoundKind::SlowPacb
                | BoundKind::SlowSd
                | BoundKind::FastPacb
                | BoundKind::FastSd
                | BoundKind::InterpPacb
                | BoundKind::InterpSd
        )
    }

    pub fn uses_samplewise(self) -> bool {
        matches!(self, BoundKind::SamplewiseAvg | BoundKind::SamplewiseInterpAvg)
    }

    /// Interpolating bounds take no training loss: it is zero by assumption.
    pub fn is_interpolating(self) -> bool {
        matches!(
            self,
            BoundKind::InterpAvg
                | BoundKind::InterpPacb
                | BoundKind::InterpSd
                | BoundKind::SamplewiseInterpAvg
        )
    }
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BoundKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BoundKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid(format!("unknown bound kind '{s}'")))
    }
}

/// A computed bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub kind: BoundKind,
    pub value: f64,
    /// Training loss entering the bound (0 for interpolating bounds).
    pub train_loss: f64,
    pub n: usize,
    pub delta: Option<f64>,
    /// Set for the fast-rate kinds that depend on `(lambda, gamma)`.
    pub params: Option<BoundParams>,
    /// False when a negative information density drove the information term
    /// below zero and the value was floored at the training-loss term.
    pub valid: bool,
}

impl BoundResult {
    pub fn vacuous(&self) -> bool {
        self.value >= 1.0
    }

    fn new(kind: BoundKind, value: f64, train_loss: f64, n: usize) -> Self {
        Self {
            kind,
            value,
            train_loss,
            n,
            delta: None,
            params: None,
            valid: true,
        }
    }
}

fn check_lambda_gamma(lambda: f64, gamma: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(invalid(format!("lambda must be positive, got {lambda}")));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(invalid(format!("gamma must be positive, got {gamma}")));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta <= 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("delta must lie in (0, 1], got {delta}")))
    }
}

fn check_train(train_loss: f64) -> Result<()> {
    if (0.0..=1.0).contains(&train_loss) {
        Ok(())
    } else {
        Err(invalid(format!("training loss must lie in [0, 1], got {train_loss}")))
    }
}

fn check_info(value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(invalid(format!(
            "KL/CMI terms must be finite and nonnegative, got {value}"
        )))
    }
}

fn check_n(n: usize, min: usize) -> Result<()> {
    if n >= min {
        Ok(())
    } else {
        Err(invalid(format!("n must be at least {min}, got {n}")))
    }
}

fn lhs_unchecked(lambda: f64, gamma: f64) -> f64 {
    let c = lambda.exp_m1() - lambda;
    lambda * (1.0 - gamma) + c * (1.0 + gamma * gamma)
}

// ---------------------------------------------------------------------------
// Feasibility analysis

/// `lambda (1 - gamma) + (e^lambda - 1 - lambda)(1 + gamma^2)`; the pair is
/// feasible iff this is `<= 0`.
pub fn feasibility_lhs(lambda: f64, gamma: f64) -> Result<f64> {
    check_lambda_gamma(lambda, gamma)?;
    Ok(lhs_unchecked(lambda, gamma))
}

/// `lambda^2 - 4 (e^lambda - 1)(e^lambda - 1 - lambda)`, the discriminant of
/// the feasibility condition read as a quadratic in `gamma`.
pub fn frontier_discriminant(lambda: f64) -> f64 {
    let em1 = lambda.exp_m1();
    lambda * lambda - 4.0 * em1 * (em1 - lambda)
}

/// Closed interval of feasible `gamma` for a fixed `lambda`, or `None` when
/// no `gamma` works.
pub fn feasible_gamma_interval(lambda: f64) -> Result<Option<(f64, f64)>> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(invalid(format!("lambda must be positive, got {lambda}")));
    }
    let disc = frontier_discriminant(lambda);
    if disc < 0.0 {
        return Ok(None);
    }
    let c = lambda.exp_m1() - lambda;
    let root = disc.sqrt();
    // Product of the roots is (lambda + c) / c; dividing avoids cancellation
    // in lambda - sqrt(disc) when lambda is small.
    let lo = 2.0 * (lambda + c) / (lambda + root);
    let hi = (lambda + root) / (2.0 * c);
    Ok(Some((lo, hi)))
}

/// Smallest `gamma` that is feasible in floating point for this `lambda`.
pub fn lower_feasible_gamma(lambda: f64) -> Result<Option<f64>> {
    let Some((lo, hi)) = feasible_gamma_interval(lambda)? else {
        return Ok(None);
    };
    let mut gamma = lo;
    let mut step = f64::EPSILON * lo;
    while lhs_unchecked(lambda, gamma) > 0.0 {
        gamma += step;
        step *= 2.0;
        if gamma > hi {
            return Ok(None);
        }
    }
    Ok(Some(gamma))
}

/// Largest `lambda` for which some `gamma` is feasible, found by bisection of
/// the discriminant on `[0.3, 0.4]`. The returned value is the lower end of
/// the final bracket, so it is itself feasible.
pub fn max_feasible_lambda(tolerance: f64) -> Result<f64> {
    if !(tolerance.is_finite() && tolerance > 0.0) {
        return Err(invalid(format!("tolerance must be positive, got {tolerance}")));
    }
    let (mut lo, mut hi) = (0.3_f64, 0.4_f64);
    debug_assert!(frontier_discriminant(lo) > 0.0 && frontier_discriminant(hi) < 0.0);
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if frontier_discriminant(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

const OPT_GRID_POINTS: usize = 1000;
const OPT_LAMBDA_MIN: f64 = 1e-3;

/// Picks `(lambda, gamma)` minimizing the fast-rate bound for the given inputs.
///
/// `lambda` runs over a 1000-point log-spaced grid on `[1e-3, lambda*)` with
/// `gamma` pinned to the lower feasible root; the best grid cell is then refined
/// by golden-section search between its neighbours.
///
/// `ExpectedKl` and `Cmi` select the average bound, `ConditionalKl` the
/// PAC-Bayesian bound, `InfoDensity` the single-draw bound and `SamplewiseCmi`
/// the samplewise average bound.
pub fn optimize_params(train_loss: f64, info: &InfoBudget, n: usize, delta: f64) -> Result<BoundParams> {
    check_train(train_loss)?;
    check_delta(delta)?;
    check_n(n, 1)?;
    info.validate()?;
    if let InfoBudget::SamplewiseCmi(v) = info {
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: v.len(),
            });
        }
    }

    let objective = |lambda: f64| -> Option<(f64, f64)> {
        let gamma = lower_feasible_gamma(lambda).ok().flatten()?;
        let params = BoundParams::new(lambda, gamma, delta, n).ok()?;
        let value = match info {
            InfoBudget::ExpectedKl(v) | InfoBudget::Cmi(v) => fast_avg(train_loss, *v, &params),
            InfoBudget::ConditionalKl(v) => fast_pacb(train_loss, *v, &params),
            InfoBudget::InfoDensity(v) => fast_sd(train_loss, *v, &params),
            InfoBudget::SamplewiseCmi(v) => samplewise_avg(train_loss, v, &params),
        }
        .ok()?
        .value;
        Some((value, gamma))
    };

    let lambda_star = max_feasible_lambda(1e-12)?;
    let (log_lo, log_hi) = (OPT_LAMBDA_MIN.ln(), (lambda_star * (1.0 - 1e-9)).ln());
    let grid: Vec<f64> = (0..OPT_GRID_POINTS)
        .map(|k| (log_lo + (log_hi - log_lo) * k as f64 / (OPT_GRID_POINTS - 1) as f64).exp())
        .collect();

    let mut best: Option<(usize, f64, f64)> = None;
    for (k, &lambda) in grid.iter().enumerate() {
        if let Some((value, gamma)) = objective(lambda) {
            if best.is_none_or(|(_, v, _)| value < v) {
                best = Some((k, value, gamma));
            }
        }
    }
    let (k, mut best_value, mut best_gamma) =
        best.ok_or_else(|| invalid("no feasible (lambda, gamma) on the optimization grid"))?;
    let mut best_lambda = grid[k];

    // golden-section refinement inside the neighbouring cells
    let mut a = grid[k.saturating_sub(1)];
    let mut b = grid[(k + 1).min(OPT_GRID_POINTS - 1)];
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let x1 = b - ratio * (b - a);
        let x2 = a + ratio * (b - a);
        let f1 = objective(x1).map_or(f64::INFINITY, |(v, _)| v);
        let f2 = objective(x2).map_or(f64::INFINITY, |(v, _)| v);
        if f1 <= f2 {
            b = x2;
        } else {
            a = x1;
        }
    }
    let mid = 0.5 * (a + b);
    if let Some((value, gamma)) = objective(mid) {
        if value < best_value {
            best_value = value;
            best_gamma = gamma;
            best_lambda = mid;
        }
    }
    let _ = best_value;
    BoundParams::new(best_lambda, best_gamma, delta, n)
}

// ---------------------------------------------------------------------------
// Slow-rate bounds

fn slow_radicand(info: f64, n: usize, delta: f64) -> f64 {
    let nf = n as f64;
    2.0 / (nf - 1.0) * (info + (nf.sqrt() / delta).ln())
}

/// `L + sqrt(2/(n-1) (KL + log(sqrt(n)/delta)))`.
pub fn slow_pacb(train_loss: f64, kl: f64, n: usize, delta: f64) -> Result<BoundResult> {
    check_train(train_loss)?;
    check_info(kl)?;
    check_n(n, 2)?;
    check_delta(delta)?;
    let value = train_loss + slow_radicand(kl, n, delta).sqrt();
    Ok(BoundResult {
        delta: Some(delta),
        ..BoundResult::new(BoundKind::SlowPacb, value, train_loss, n)
    })
}

/// Single-draw counterpart of [`slow_pacb`]. A negative radicand yields the
/// training loss with `valid = false`.
pub fn slow_sd(train_loss: f64, info_density: f64, n: usize, delta: f64) -> Result<BoundResult> {
    check_train(train_loss)?;
    InfoBudget::InfoDensity(info_density).validate()?;
    check_n(n, 2)?;
    check_delta(delta)?;
    let radicand = slow_radicand(info_density, n, delta);
    let (value, valid) = if radicand >= 0.0 {
        (train_loss + radicand.sqrt(), true)
    } else {
        (train_loss, false)
    };
    Ok(BoundResult {
        delta: Some(delta),
        valid,
        ..BoundResult::new(BoundKind::SlowSd, value, train_loss, n)
    })
}

/// `L + sqrt(2 I / n)`.
pub fn steinke_slow(train_loss: f64, cmi: f64, n: usize) -> Result<BoundResult> {
    check_train(train_loss)?;
    check_info(cmi)?;
    check_n(n, 1)?;
    let value = train_loss + (2.0 * cmi / n as f64).sqrt();
    Ok(BoundResult::new(BoundKind::SteinkeSlow, value, train_loss, n))
}

/// `2 L + 3 I / n`.
pub fn steinke_fast(train_loss: f64, cmi: f64, n: usize) -> Result<BoundResult> {
    check_train(train_loss)?;
    check_info(cmi)?;
    check_n(n, 1)?;
    let value = 2.0 * train_loss + cmi * 3.0 / n as f64;
    Ok(BoundResult::new(BoundKind::SteinkeFast, value, train_loss, n))
}

// ---------------------------------------------------------------------------
// Fast-rate bounds

fn fast_value(train_loss: f64, info_term: f64, params: &BoundParams) -> f64 {
    let inv_lambda = 1.0 / params.lambda;
    params.gamma * train_loss + info_term * inv_lambda / params.n as f64
}

fn fast_result(kind: BoundKind, value: f64, train_loss: f64, params: &BoundParams) -> BoundResult {
    BoundResult {
        params: Some(*params),
        delta: kind.uses_delta().then_some(params.delta),
        ..BoundResult::new(kind, value, train_loss, params.n)
    }
}

/// `gamma L + E[KL] / (lambda n)`.
pub fn fast_avg(train_loss: f64, expected_kl: f64, params: &BoundParams) -> Result<BoundResult> {
    check_train(train_loss)?;
    check_info(expected_kl)?;
    params.ensure_feasible()?;
    let value = fast_value(train_loss, expected_kl, params);
    Ok(fast_result(BoundKind::FastAvg, value, train_loss, params))
}

/// `gamma L + (KL + log(1/delta)) / (lambda n)`.
pub fn fast_pacb(train_loss: f64, kl: f64, params: &BoundParams) -> Result<BoundResult> {
    check_train(train_loss)?;
    check_info(kl)?;
    params.ensure_feasible()?;
    let value = fast_value(train_loss, kl + (1.0 / params.delta).ln(), params);
    Ok(fast_result(BoundKind::FastPacb, value, train_loss, params))
}

/// `gamma L + (i + log(1/delta)) / (lambda n)`. When the information term is
/// negative the value is floored at `gamma L` and flagged invalid.
pub fn fast_sd(train_loss: f64, info_density: f64, params: &BoundParams) -> Result<BoundResult> {
    check_train(train_loss)?;
    InfoBudget::InfoDensity(info_density).validate()?;
    params.ensure_feasible()?;
    let term = info_density + (1.0 / params.delta).ln();
    let (value, valid) = if term >= 0.0 {
        (fast_value(train_loss, term, params), true)
    } else {
        (params.gamma * train_loss, false)
    };
    Ok(BoundResult {
        valid,
        ..fast_result(BoundKind::FastSd, value, train_loss, params)
    })
}

/// `gamma L + sum_i I(W; S_i | Z~) / (lambda n)`; requires one entry per sample.
pub fn samplewise_avg(train_loss: f64, samplewise_cmi: &[f64], params: &BoundParams) -> Result<BoundResult> {
    check_train(train_loss)?;
    if samplewise_cmi.len() != params.n {
        return Err(Error::DimensionMismatch {
            expected: params.n,
            got: samplewise_cmi.len(),
        });
    }
    samplewise_cmi.iter().try_for_each(|v| check_info(*v))?;
    params.ensure_feasible()?;
    let value = fast_value(train_loss, samplewise_cmi.iter().sum(), params);
    Ok(fast_result(BoundKind::SamplewiseAvg, value, train_loss, params))
}

// ---------------------------------------------------------------------------
// Interpolating bounds (training loss certified zero)

fn interp_value(info_term: f64, n: usize) -> f64 {
    info_term / (n as f64 * LN_2)
}

/// `I / (n log 2)`.
pub fn interp_avg(cmi: f64, n: usize) -> Result<BoundResult> {
    check_info(cmi)?;
    check_n(n, 1)?;
    Ok(BoundResult::new(BoundKind::InterpAvg, interp_value(cmi, n), 0.0, n))
}

/// `(KL + log(1/delta)) / (n log 2)`.
pub fn interp_pacb(kl: f64, n: usize, delta: f64) -> Result<BoundResult> {
    check_info(kl)?;
    check_n(n, 1)?;
    check_delta(delta)?;
    let value = interp_value(kl + (1.0 / delta).ln(), n);
    Ok(BoundResult {
        delta: Some(delta),
        ..BoundResult::new(BoundKind::InterpPacb, value, 0.0, n)
    })
}

/// `(i + log(1/delta)) / (n log 2)`, floored at 0 and flagged when negative.
pub fn interp_sd(info_density: f64, n: usize, delta: f64) -> Result<BoundResult> {
    InfoBudget::InfoDensity(info_density).validate()?;
    check_n(n, 1)?;
    check_delta(delta)?;
    let term = info_density + (1.0 / delta).ln();
    let (value, valid) = if term >= 0.0 {
        (interp_value(term, n), true)
    } else {
        (0.0, false)
    };
    Ok(BoundResult {
        delta: Some(delta),
        valid,
        ..BoundResult::new(BoundKind::InterpSd, value, 0.0, n)
    })
}

/// `sum_i I(W; S_i | Z~) / (n log 2)` with `n = samplewise_cmi.len()`.
pub fn samplewise_interp_avg(samplewise_cmi: &[f64]) -> Result<BoundResult> {
    let n = samplewise_cmi.len();
    check_n(n, 1)?;
    samplewise_cmi.iter().try_for_each(|v| check_info(*v))?;
    let value = interp_value(samplewise_cmi.iter().sum(), n);
    Ok(BoundResult::new(BoundKind::SamplewiseInterpAvg, value, 0.0, n))
}

/// Per-bound confidence when `k` bounds must hold simultaneously.
pub fn split_delta(delta_total: f64, k: usize) -> Result<f64> {
    check_delta(delta_total)?;
    if k == 0 {
        return Err(invalid("union bound over zero events"));
    }
    Ok(delta_total / k as f64)
}

/// Inputs for [`evaluate`]; fields a kind does not use are ignored.
#[derive(Clone, Debug, Default)]
pub struct BoundInputs {
    pub train_loss: f64,
    pub info: f64,
    pub samplewise: Vec<f64>,
    pub n: usize,
    pub delta: Option<f64>,
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
}

/// Dispatches to the bound named by `kind`.
pub fn evaluate(kind: BoundKind, inputs: &BoundInputs) -> Result<BoundResult> {
    let delta = || inputs.delta.ok_or_else(|| invalid(format!("{kind} needs delta")));
    let params = || -> Result<BoundParams> {
        let lambda = inputs.lambda.ok_or_else(|| invalid(format!("{kind} needs lambda")))?;
        let gamma = inputs.gamma.ok_or_else(|| invalid(format!("{kind} needs gamma")))?;
        BoundParams::new(lambda, gamma, inputs.delta.unwrap_or(1.0), inputs.n)
    };
    let t = inputs.train_loss;
    match kind {
        BoundKind::SteinkeSlow => steinke_slow(t, inputs.info, inputs.n),
        BoundKind::SteinkeFast => steinke_fast(t, inputs.info, inputs.n),
        BoundKind::SlowPacb => slow_pacb(t, inputs.info, inputs.n, delta()?),
        BoundKind::SlowSd => slow_sd(t, inputs.info, inputs.n, delta()?),
        BoundKind::FastAvg => fast_avg(t, inputs.info, &params()?),
        BoundKind::FastPacb => {
            delta()?;
            fast_pacb(t, inputs.info, &params()?)
        }
        BoundKind::FastSd => {
            delta()?;
            fast_sd(t, inputs.info, &params()?)
        }
        BoundKind::SamplewiseAvg => samplewise_avg(t, &inputs.samplewise, &params()?),
        BoundKind::InterpAvg => interp_avg(inputs.info, inputs.n),
        BoundKind::InterpPacb => interp_pacb(inputs.info, inputs.n, delta()?),
        BoundKind::InterpSd => interp_sd(inputs.info, inputs.n, delta()?),
        BoundKind::SamplewiseInterpAvg => samplewise_interp_avg(&inputs.samplewise),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn reference(delta: f64, n: usize) -> BoundParams {
        BoundParams::reference(delta, n).unwrap()
    }

    #[test]
    fn feasibility_examples() {
        assert_abs_diff_eq!(feasibility_lhs(1.0 / 3.0, 2.0).unwrap(), -0.0219379, epsilon = 1e-6);
        let lhs = feasibility_lhs(1.0 / 2.98, 1.795).unwrap();
        assert!(lhs <= 0.0, "{lhs}");
        assert_abs_diff_eq!(feasibility_lhs(0.5, 2.0).unwrap(), 0.243606, epsilon = 1e-5);
        assert!(feasibility_lhs(0.0, 1.0).is_err());
        assert!(feasibility_lhs(0.2, -1.0).is_err());
    }

    #[test]
    fn gamma_interval_examples() {
        assert_eq!(feasible_gamma_interval(0.5).unwrap(), None);
        let (lo, hi) = feasible_gamma_interval(1.0 / 3.0).unwrap().unwrap();
        assert!(lo <= 1.795 && 2.0 <= hi, "({lo}, {hi})");
        assert!(feasible_gamma_interval(0.36).unwrap().is_some());
        assert!(feasible_gamma_interval(-0.1).is_err());
    }

    #[test]
    fn interval_endpoints_are_roots() {
        for &lambda in &[1e-3, 0.01, 0.1, 0.2, 0.3, 1.0 / 3.0, 0.35, 0.36] {
            let (lo, hi) = feasible_gamma_interval(lambda).unwrap().unwrap();
            assert!(lhs_unchecked(lambda, lo).abs() < 1e-9);
            assert!(lhs_unchecked(lambda, hi).abs() < 1e-9);
            assert!(lhs_unchecked(lambda, 0.5 * (lo + hi)) < 0.0);
            let g = lower_feasible_gamma(lambda).unwrap().unwrap();
            assert!(lhs_unchecked(lambda, g) <= 0.0);
            assert!((g - lo) / lo < 1e-10);
        }
    }

    #[test]
    fn frontier_lies_between_036_and_037() {
        assert!(frontier_discriminant(0.36) > 0.0);
        assert!(frontier_discriminant(0.37) < 0.0);
        let star = max_feasible_lambda(1e-10).unwrap();
        assert!(star > 0.36 && star < 0.37, "{star}");
        assert!(frontier_discriminant(star) >= 0.0);
        assert!(frontier_discriminant(star + 2e-10) < 0.0);
        assert!(max_feasible_lambda(0.0).is_err());
    }

    #[test]
    fn slow_examples() {
        let b = slow_pacb(0.1, 100.0, 10_000, 0.05).unwrap();
        assert_abs_diff_eq!(b.value, 0.2467, epsilon = 1e-4);
        let b = slow_pacb(0.0, 0.0, 1000, 0.05).unwrap();
        assert_abs_diff_eq!(b.value, 0.11363, epsilon = 1e-5);
        assert!(slow_pacb(0.1, 1.0, 1, 0.05).is_err());
        let b = slow_sd(0.0, 10.0, 100, 0.01).unwrap();
        assert_abs_diff_eq!(b.value, 0.5845, epsilon = 1e-4);
        assert!(b.valid);
    }

    #[test]
    fn slow_sd_radicand_edge() {
        let n = 100;
        let delta = 0.05;
        let zero = -((n as f64).sqrt() / delta).ln();
        let b = slow_sd(0.2, zero, n, delta).unwrap();
        assert_abs_diff_eq!(b.value, 0.2, epsilon = 1e-7);
        let b = slow_sd(0.2, zero - 1.0, n, delta).unwrap();
        assert!(!b.valid);
        assert_eq!(b.value, 0.2);
        let same = slow_sd(0.1, 100.0, 10_000, 0.05).unwrap();
        assert_eq!(same.value, slow_pacb(0.1, 100.0, 10_000, 0.05).unwrap().value);
    }

    #[test]
    fn slow_additive_term_vanishes() {
        let gaps: Vec<f64> = [1_000usize, 1_000_000, 1_000_000_000]
            .iter()
            .map(|&n| slow_pacb(0.5, 1e-9, n, 0.05).unwrap().value - 0.5)
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2]);
        assert!(gaps[2] < 1e-3);
    }

    #[test]
    fn fast_examples() {
        let p = reference(0.05, 10_000);
        assert_abs_diff_eq!(fast_avg(0.1, 100.0, &p).unwrap().value, 0.1795 + 0.0298, epsilon = 1e-12);
        assert_abs_diff_eq!(fast_pacb(0.1, 100.0, &p).unwrap().value, 0.2102, epsilon = 1e-4);
        let steinke = BoundParams::steinke(0.05, 10_000).unwrap();
        assert_abs_diff_eq!(fast_pacb(0.1, 100.0, &steinke).unwrap().value, 0.2309, epsilon = 1e-4);
        let p1 = BoundParams::reference(1.0, 10).unwrap();
        assert_eq!(fast_pacb(0.0, 0.0, &p1).unwrap().value, 0.0);
        assert_eq!(fast_avg(0.0, 0.0, &p1).unwrap().value, 0.0);
        let sd = fast_sd(0.0, 5.0, &reference(0.05, 100)).unwrap();
        assert_abs_diff_eq!(sd.value, 0.2383, epsilon = 1e-4);
    }

    #[test]
    fn fast_sd_floor_is_flagged() {
        let p = reference(0.05, 100);
        let b = fast_sd(0.1, -(20f64).ln(), &p).unwrap();
        assert_abs_diff_eq!(b.value, 0.1795, epsilon = 1e-12);
        assert!(b.valid);
        let b = fast_sd(0.1, -10.0, &p).unwrap();
        assert_eq!(b.value, 0.1795);
        assert!(!b.valid);
    }

    #[test]
    fn infeasible_params_are_rejected() {
        let p = BoundParams::new(0.5, 2.0, 0.05, 100).unwrap();
        assert!(matches!(fast_avg(0.1, 1.0, &p), Err(Error::Infeasible { .. })));
        assert!(matches!(fast_pacb(0.1, 1.0, &p), Err(Error::Infeasible { .. })));
        assert!(matches!(fast_sd(0.1, 1.0, &p), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn samplewise_examples() {
        let p = BoundParams::reference(0.05, 4).unwrap();
        let total = 2.0;
        let even = vec![total / 4.0; 4];
        assert_abs_diff_eq!(
            samplewise_avg(0.1, &even, &p).unwrap().value,
            fast_avg(0.1, total, &p).unwrap().value,
            epsilon = 1e-15
        );
        assert_eq!(samplewise_avg(0.0, &[0.0; 4], &p).unwrap().value, 0.0);
        assert!(samplewise_avg(0.0, &[0.0, -1.0, 0.0, 0.0], &p).is_err());
        assert!(samplewise_avg(0.0, &[0.0; 3], &p).is_err());
    }

    #[test]
    fn interpolating_examples() {
        let n = 50;
        assert_abs_diff_eq!(interp_avg(n as f64 * LN_2, n).unwrap().value, 1.0, epsilon = 1e-15);
        assert_eq!(interp_avg(0.0, n).unwrap().value, 0.0);
        assert_eq!(interp_pacb(0.0, n, 1.0).unwrap().value, 0.0);
        let v = interp_pacb(n as f64 * LN_2, n, 0.05).unwrap().value;
        assert_abs_diff_eq!(v, 1.0 + 20f64.ln() / (n as f64 * LN_2), epsilon = 1e-12);
        assert_abs_diff_eq!(interp_pacb(10.0, 100, 0.05).unwrap().value, 0.1875, epsilon = 1e-4);
        let sd = interp_sd(-10.0, 100, 0.05).unwrap();
        assert!(!sd.valid && sd.value == 0.0);
        assert_eq!(samplewise_interp_avg(&[0.0; 7]).unwrap().value, 0.0);
        let parts = [0.1, 0.2, 0.3];
        assert_abs_diff_eq!(
            samplewise_interp_avg(&parts).unwrap().value,
            interp_avg(0.6, 3).unwrap().value,
            epsilon = 1e-15
        );
    }

    #[test]
    fn steinke_examples() {
        assert_abs_diff_eq!(steinke_slow(0.05, 10.0, 1000).unwrap().value, 0.19142, epsilon = 1e-4);
        assert_abs_diff_eq!(steinke_fast(0.05, 10.0, 1000).unwrap().value, 0.13, epsilon = 1e-12);
        assert_eq!(steinke_slow(0.3, 0.0, 10).unwrap().value, 0.3);
        assert_eq!(steinke_fast(0.3, 0.0, 10).unwrap().value, 0.6);
    }

    #[test]
    fn split_delta_examples() {
        assert_abs_diff_eq!(split_delta(0.05, 54).unwrap(), 9.259e-4, epsilon = 1e-7);
        assert_eq!(split_delta(0.05, 1).unwrap(), 0.05);
        assert_abs_diff_eq!(split_delta(0.05, 27).unwrap(), 1.852e-3, epsilon = 1e-6);
        assert!(split_delta(0.05, 0).is_err());
    }

    #[test]
    fn vacuous_values_are_kept() {
        let b = steinke_fast(0.9, 100.0, 10).unwrap();
        assert!(b.value > 1.0 && b.vacuous());
    }

    #[test]
    fn optimizer_zero_loss_pushes_lambda_to_frontier() {
        let p = optimize_params(0.0, &InfoBudget::ConditionalKl(10.0), 1000, 0.05).unwrap();
        let star = max_feasible_lambda(1e-12).unwrap();
        assert!(p.lambda > 0.99 * star, "{}", p.lambda);
        assert!(p.is_feasible());
    }

    #[test]
    fn optimizer_beats_reference_pair() {
        let info = InfoBudget::ConditionalKl(100.0);
        let p = optimize_params(0.1, &info, 10_000, 0.05).unwrap();
        let v = fast_pacb(0.1, 100.0, &p).unwrap().value;
        assert!(v <= 0.2102, "{v}");
        assert!(v <= fast_pacb(0.1, 100.0, &reference(0.05, 10_000)).unwrap().value);
        let p = optimize_params(0.0, &InfoBudget::ExpectedKl(0.0), 10, 1.0).unwrap();
        assert_eq!(fast_avg(0.0, 0.0, &p).unwrap().value, 0.0);
        assert!(optimize_params(0.0, &InfoBudget::SamplewiseCmi(vec![0.0; 3]), 4, 0.1).is_err());
    }

    #[test]
    fn bound_kind_names_round_trip() {
        for k in BoundKind::ALL {
            assert_eq!(k.name().parse::<BoundKind>().unwrap(), k);
        }
        assert!("fast".parse::<BoundKind>().is_err());
    }

    proptest! {
        #[test]
        fn fast_avg_recovers_steinke_fast(train in 0.0..=1.0f64, cmi in 0.0..1e4f64, n in 1usize..100_000) {
            let p = BoundParams::steinke(0.05, n).unwrap();
            prop_assert_eq!(fast_avg(train, cmi, &p).unwrap().value, steinke_fast(train, cmi, n).unwrap().value);
        }

        #[test]
        fn bounds_are_monotone(
            train in 0.0..0.9f64,
            info in 0.0..500.0f64,
            dt in 0.0..0.1f64,
            di in 0.0..50.0f64,
            n in 2usize..50_000,
            dn in 1usize..1000,
            delta in 1e-4..1.0f64,
        ) {
            let eval = |t: f64, i: f64, n: usize| -> Vec<f64> {
                let p = BoundParams::reference(delta, n).unwrap();
                vec![
                    steinke_slow(t, i, n).unwrap().value,
                    steinke_fast(t, i, n).unwrap().value,
                    slow_pacb(t, i, n, delta).unwrap().value,
                    slow_sd(t, i, n, delta).unwrap().value,
                    fast_avg(t, i, &p).unwrap().value,
                    fast_pacb(t, i, &p).unwrap().value,
                    fast_sd(t, i, &p).unwrap().value,
                    interp_avg(i, n).unwrap().value,
                    interp_pacb(i, n, delta).unwrap().value,
                    interp_sd(i, n, delta).unwrap().value,
                ]
            };
            let base = eval(train, info, n);
            let more_train = eval(train + dt, info, n);
            let more_info = eval(train, info + di, n);
            let more_n = eval(train, info, n + dn);
            for k in 0..base.len() {
                prop_assert!(more_train[k] >= base[k]);
                prop_assert!(more_info[k] >= base[k]);
                prop_assert!(more_n[k] <= base[k] + 1e-15, "kind {} n {} -> {}", k, base[k], more_n[k]);
            }
        }

        #[test]
        fn interp_beats_fast_at_zero_train(kl in 0.0..1e3f64, n in 1usize..10_000, delta in 1e-4..1.0f64, u in 0.0..1.0f64) {
            let lambda = 1e-3 + u * (max_feasible_lambda(1e-12).unwrap() - 2e-3);
            let gamma = lower_feasible_gamma(lambda).unwrap().unwrap();
            let p = BoundParams::new(lambda, gamma, delta, n).unwrap();
            let fast = fast_pacb(0.0, kl, &p).unwrap().value;
            let interp = interp_pacb(kl, n, delta).unwrap().value;
            prop_assert!(interp <= fast);
            if kl + (1.0 / delta).ln() > 0.0 {
                prop_assert!(interp < fast);
            }
        }

        #[test]
        fn split_delta_composes(delta in 1e-6..1.0f64, a in 1usize..100, b in 1usize..100) {
            let once = split_delta(delta, a * b).unwrap();
            let twice = split_delta(split_delta(delta, a).unwrap(), b).unwrap();
            prop_assert!((once - twice).abs() <= 1e-15 * once);
        }
    }
}
