//! Datasets, configuration, checkpoints and metrics files.

mod checkpoint;
mod config;
mod csvdata;
mod dataset;
mod idx;
mod metrics;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_sorter, load_target, save_checkpoint, save_sorter,
    save_target, NamedTensors, MAGIC, VERSION,
};
pub use config::{DatasetKind, ExperimentConfig};
pub use csvdata::{load_csv_dataset, parse_csv_dataset, write_csv_dataset, CsvSchema};
pub use dataset::{make_blobs, make_two_moons, Dataset, Normalization, BLOB_RADIUS};
pub use idx::{encode_idx, load_idx, parse_idx, IMAGE_MAGIC, LABEL_MAGIC};
pub use metrics::{format_metrics, parse_metrics, read_metrics, write_metrics, MetricsRecord, METRICS_HEADER};
