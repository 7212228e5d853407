//! Dataset loading, run configuration and result tables.

pub mod config;
pub mod idx;
pub mod table;

pub use config::{DataSource, IdxSource, RunConfig, RunKind, Transform};
pub use idx::{encode_images, encode_labels, load_idx, parse_images, parse_labels, IdxImages, IMAGE_MAGIC, LABEL_MAGIC};
pub use table::{format_value, write_atomic, Delimiter, ResultTable, TableRow};
