//! Posterior and prior construction, sigma searches, union-bound accounting
//! and replica statistics for the Gaussian-posterior experiment.

mod experiment;
mod sigma;

pub use experiment::{
    build_prior, derive_seed, prior_mean, prior_windows, run_experiment, run_sweep, Aggregate, ChosenBound,
    ExperimentReport, PipelineConfig, PriorConfig, PriorFit, ReplicaReport, Stat, Sweep,
};
pub use sigma::{candidate_sigmas, select_sigma2, sigma_search, Choice, OneDigit, Sigma2Selection, SigmaSearchConfig};
