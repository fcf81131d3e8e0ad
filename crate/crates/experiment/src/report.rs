//! H¹ evaluation of a surrogate against VEM references.

use serde::{Deserialize, Serialize};
use vembeam_core::{h1_error, MaterialParams};
use vembeam_surrogate::SurrogateModel;

use crate::config::{DatasetConfig, SCHEMA_VERSION};
use crate::dataset::{by_sample, solve_sample, DatasetRecord};
use crate::error::{ExperimentError, Result};
use crate::field::SurrogateField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleError {
    pub sample_id: usize,
    pub h1_error: f64,
    /// H¹ error over the H¹ norm of the reference.
    pub relative_h1: f64,
}

/// Error statistics of one `(order, elems_per_edge)` configuration. Standard
/// deviations are population values over the listed samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationReport {
    pub order: usize,
    pub elems_per_edge: usize,
    pub h1_mean: f64,
    pub h1_std: f64,
    pub relative_mean: f64,
    pub relative_std: f64,
    pub samples: Vec<SampleError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeInfo {
    pub package_version: String,
    pub evaluated_samples: usize,
    pub quadrature: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub configurations: Vec<ConfigurationReport>,
    pub runtime: RuntimeInfo,
}

impl ExperimentReport {
    pub fn new(configurations: Vec<ConfigurationReport>) -> Self {
        let evaluated_samples = configurations.iter().map(|c| c.samples.len()).sum();
        Self {
            schema_version: SCHEMA_VERSION,
            configurations,
            runtime: RuntimeInfo {
                package_version: env!("CARGO_PKG_VERSION").to_string(),
                evaluated_samples,
                quadrature: "Gauss-Legendre, order + 1 points per element".into(),
            },
        }
    }
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Summary over per-sample errors, ordered by sample id.
pub fn summarize(order: usize, elems_per_edge: usize, mut samples: Vec<SampleError>) -> ConfigurationReport {
    samples.sort_by_key(|s| s.sample_id);
    let abs: Vec<f64> = samples.iter().map(|s| s.h1_error).collect();
    let rel: Vec<f64> = samples.iter().map(|s| s.relative_h1).collect();
    let (h1_mean, h1_std) = mean_std(&abs);
    let (relative_mean, relative_std) = mean_std(&rel);
    ConfigurationReport {
        order,
        elems_per_edge,
        h1_mean,
        h1_std,
        relative_mean,
        relative_std,
        samples,
    }
}

/// Compares the surrogate with a fresh VEM solve for every sample in
/// `records`. The records must belong to `config`'s mesh.
pub fn evaluate(
    model: &SurrogateModel,
    config: &DatasetConfig,
    records: &[DatasetRecord],
) -> Result<ConfigurationReport> {
    let mesh_desc = config.mesh();
    if let Some(r) = records.iter().find(|r| r.mesh != mesh_desc) {
        return Err(ExperimentError::MeshMismatch(format!(
            "record of sample {} uses {:?}, expected {:?}",
            r.sample_id, r.mesh, mesh_desc
        )));
    }
    let mut errors = Vec::new();
    for (id, recs) in by_sample(records) {
        let material: MaterialParams = recs[0].material;
        let (mesh, solution) = solve_sample(config, material)?;
        let field = SurrogateField::new(model, &mesh, &material)?;
        let report = h1_error(&solution, &field, &mesh)?;
        if !report.h1_error.is_finite() {
            return Err(ExperimentError::Numeric(format!("sample {id}: non-finite H1 error")));
        }
        errors.push(SampleError {
            sample_id: id,
            h1_error: report.h1_error,
            relative_h1: report.relative_h1,
        });
    }
    Ok(summarize(mesh_desc.order, mesh_desc.elems_per_edge, errors))
}

/// VEM reference against itself; zero by construction.
pub fn self_consistency(config: &DatasetConfig, records: &[DatasetRecord]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for recs in by_sample(records).values() {
        let (mesh, solution) = solve_sample(config, recs[0].material)?;
        worst = worst.max(h1_error(&solution, &solution, &mesh)?.h1_error);
    }
    Ok(worst)
}
