//! Portico experiments: VEM datasets, surrogate training and H¹ evaluation.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod field;
pub mod report;

pub use config::{DatasetConfig, LogRange, MeshDescriptor, TrainFile, SCHEMA_VERSION};
pub use dataset::{Dataset, DatasetRecord, Manifest};
pub use error::{ExperimentError, Result};
pub use field::SurrogateField;
pub use report::{ConfigurationReport, ExperimentReport, SampleError};
