//! Attribution of HPC I/O throughput prediction error.
//!
//! A throughput model's error is split into shares caused by poorly modeled
//! application behavior, missing system-state information, out-of-distribution
//! jobs, and inherent contention plus noise. Each share is bounded by a
//! litmus test that needs only duplicate jobs, timestamps, and model
//! ensembles, so the attribution works on logs from any storage system.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the bottom of this file fix the scalar for callers who do not care.

pub mod attribution;
pub mod data;
pub mod duplicates;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod simulator;
pub mod stats;
pub mod system;
pub mod uncertainty;

pub use data::{Dataset, FeatureGroup, FeatureSchema, JobRecord, START_TIME};
pub use error::{Error, Result, RowIssue};
pub use metrics::{log_ratio_error, to_percent_error, ErrorSummary};
pub use model::{GbtHyperparams, GbtModel, HyperparamGrid};
pub use scalar::Real;

pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type JobRecord64 = JobRecord<f64>;
pub type GbtModel64 = GbtModel<f64>;
pub type GbtModel32 = GbtModel<f32>;
pub type ErrorBreakdown64 = attribution::ErrorBreakdown<f64>;
