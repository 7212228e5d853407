//! SGD-trained softmax classifiers and dataset transformations.

mod data;
mod model;
mod sgd;

pub use data::{binarize_labels, randomize_labels, synth_dataset, Dataset, SynthSpec};
pub use model::{Architecture, ModelSpec};
pub use sgd::{learning_rate, sgd_train, sgd_train_with_history, EpochStats, SgdConfig};
