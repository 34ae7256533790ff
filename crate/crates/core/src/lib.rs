//! Application recognition for HPC jobs from monitoring telemetry.
//!
//! The pipeline turns per-node monitoring samples into three derived metric
//! traces (node power, instructions per cycle, memory used), resamples each
//! trace to a fixed length, encodes it as a Gramian Angular Field and stacks
//! the fields into an `l × l × c` *job signature*. A small convolutional
//! network classifies signatures; predictions whose top probability falls
//! below a confidence threshold are reported as `unknown`.
//!
//! Module map:
//!
//! - [`ingest`]: CSV parsing, metric derivation, node aggregation.
//! - [`resample`]: aggregation downsampling and forward-fill upsampling.
//! - [`gaf`]: Gramian Angular Fields, signatures, PNG and binary export.
//! - [`cnn`]: the convolutional classifier, training and persistence.
//! - [`baseline`]: statistical features with a one-vs-rest linear model.
//! - [`synth`]: a seeded synthetic workload generator.
//! - [`harness`]: splits, folds, accuracy and the experiment families.

pub mod baseline;
mod binio;
pub mod cnn;
mod error;
pub mod fsutil;
pub mod gaf;
pub mod harness;
pub mod ingest;
pub mod prediction;
pub mod resample;
pub mod synth;

pub use error::{Error, Result};
pub use ingest::{JobRecord, MetricKind, MetricTrace};
pub use prediction::{PredictionResult, UNKNOWN_LABEL};
