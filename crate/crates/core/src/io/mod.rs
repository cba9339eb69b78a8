//! Configuration, volume files, PGM slices and CSV tables.

mod config;
mod metrics;
mod pgm;
mod volume;

pub use config::{parse_config, BumpSpec, Pipeline, RunConfig, Setup};
pub use metrics::{compare, write_metrics_csv, write_reports_csv, Metrics, CORE_RADIUS};
pub use pgm::{export_slice_pgm, extract_slice, SliceSpec};
pub use volume::{Payload, VolumeFile, MAGIC};
