//! TOML run configuration.
//!
//! ```toml
//! kind = "experiment"          # optional; bounds-only | verify | experiment | params
//! seed = 7                     # optional master seed, drawn from entropy when absent
//! output = "results.dat"       # optional, relative to this file
//! csv = false                  # optional
//!
//! [data]
//! source = "synthetic"         # or "idx" with `images`, `labels`, optional `limit`
//! dim = 10
//! offset = 1.0
//! noise_std = 1.0
//! size = 4000
//!
//! [transform]                  # optional
//! binarize = false
//! randomize_fraction = 0.0
//!
//! [pipeline]                   # n, replicas, delta_total, loss_draws, lambda, gamma, single_draw
//! n = 500
//! [pipeline.model]
//! input_dim = 10
//! num_classes = 2
//! architecture = { type = "linear" }   # or { type = "mlp", hidden = [100] }
//! [pipeline.sgd]
//! alpha0 = 0.05
//! momentum = 0.9
//! batch_size = 64
//! epochs = 20
//! [pipeline.sigma]
//! threshold = 0.05
//! [pipeline.prior]
//! num_subsets = 10
//!
//! [sweep]                      # optional; a single point keyed by n otherwise
//! variable = "n"               # or "epochs"
//! values = [250, 500, 1000]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::idx::load_idx;
use crate::error::{invalid, Error, Result};
use crate::learners::{binarize_labels, randomize_labels, synth_dataset, Dataset, SynthSpec};
use crate::pipeline::{derive_seed, PipelineConfig, Sweep};

const STREAM_DATA: u64 = 6;
const STREAM_LABELS: u64 = 7;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunKind {
    BoundsOnly,
    Verify,
    #[default]
    Experiment,
    Params,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxSource {
    pub images: PathBuf,
    pub labels: PathBuf,
    /// Keep only the first `limit` rows.
    #[serde(default)]
    pub limit: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataSource {
    Synthetic(SynthSpec),
    Idx(IdxSource),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transform {
    #[serde(default)]
    pub binarize: bool,
    #[serde(default)]
    pub randomize_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub kind: RunKind,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub csv: bool,
    pub data: DataSource,
    #[serde(default)]
    pub transform: Transform,
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub sweep: Option<Sweep>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses `path` and resolves relative data and output paths against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let DataSource::Idx(src) = &mut cfg.data {
            src.images = base.join(&src.images);
            src.labels = base.join(&src.labels);
            for p in [&src.images, &src.labels] {
                if !p.is_file() {
                    return Err(Error::Config(format!("data file {} does not exist", p.display())));
                }
            }
        }
        if let Some(out) = &mut cfg.output {
            *out = base.join(&*out);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, e: Error| Error::Config(format!("{name}: {e}"));
        self.pipeline.validate().map_err(|e| field("pipeline", e))?;
        if !(0.0..=1.0).contains(&self.transform.randomize_fraction) {
            return Err(Error::Config(format!(
                "transform.randomize_fraction: must lie in [0, 1], got {}",
                self.transform.randomize_fraction
            )));
        }
        if let Some(sweep) = &self.sweep {
            if matches!(sweep, Sweep::N(v) if v.iter().any(|&n| n < 2)) {
                return Err(Error::Config("sweep.values: every n must be at least 2".into()));
            }
            if matches!(sweep, Sweep::Epochs(v) if v.contains(&0)) {
                return Err(Error::Config("sweep.values: epochs must be positive".into()));
            }
        }
        Ok(())
    }

    /// Sweep to run; without a `[sweep]` table, the single configured `n`.
    pub fn effective_sweep(&self) -> Sweep {
        self.sweep.clone().unwrap_or_else(|| Sweep::N(vec![self.pipeline.n]))
    }

    /// Loads the data and applies the label transforms, seeded from `seed`.
    pub fn dataset(&self, seed: u64) -> Result<Dataset> {
        let data = match &self.data {
            DataSource::Synthetic(spec) => synth_dataset(spec, derive_seed(seed, STREAM_DATA, 0))?,
            DataSource::Idx(src) => {
                let d = load_idx(&src.images, &src.labels)?;
                match src.limit {
                    Some(l) => d.head(l.min(d.len()))?,
                    None => d,
                }
            }
        };
        let data = if self.transform.binarize { binarize_labels(&data) } else { data };
        if self.transform.randomize_fraction > 0.0 {
            let classes = data.num_classes();
            randomize_labels(
                &data,
                self.transform.randomize_fraction,
                classes,
                derive_seed(seed, STREAM_LABELS, 0),
            )
        } else {
            Ok(data)
        }
    }

    /// Largest training-set size any sweep point needs.
    pub fn max_n(&self) -> usize {
        match self.effective_sweep() {
            Sweep::N(v) => v.into_iter().max().unwrap_or(self.pipeline.n),
            Sweep::Epochs(_) => self.pipeline.n,
        }
    }

    pub fn check_data_size(&self, data: &Dataset) -> Result<()> {
        let need = 2 * self.max_n();
        if data.len() < need {
            return Err(invalid(format!("the sweep needs {need} rows, the data have {}", data.len())));
        }
        Ok(())
    }
}
