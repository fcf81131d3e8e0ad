//! Subcommand implementations over files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vembeam_core::{assemble_and_solve, FrameModel, GlobalSolution};
use vembeam_surrogate::{train as train_surrogate, ModelArtifact, SurrogateModel, TrainOutcome, TrainingResult};

use crate::config::{check_schema, DatasetConfig, MeshDescriptor, TrainFile, SCHEMA_VERSION};
use crate::dataset::{
    generate, read_json, read_manifest, read_records, training_set, write_dataset, write_json, Dataset, DatasetRecord,
};
use crate::error::{ExperimentError, Result};
use crate::report::{evaluate, self_consistency, ConfigurationReport, ExperimentReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub schema_version: u32,
    pub model: FrameModel,
    pub solution: GlobalSolution,
}

/// Trained surrogate with the discretization it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub mesh: MeshDescriptor,
    pub train_samples: Vec<usize>,
    pub surrogate: ModelArtifact,
}

impl ModelFile {
    pub fn model(&self) -> Result<SurrogateModel> {
        check_schema(self.schema_version)?;
        Ok(self.surrogate.clone().into_model()?)
    }
}

/// Solves a frame file, optionally overriding every member's order and
/// element count.
pub fn solve(input: &Path, order: Option<usize>, elems_per_edge: Option<usize>, out: &Path) -> Result<SolutionFile> {
    let mut model: FrameModel = read_json(input)?;
    check_schema(model.schema_version)?;
    for m in &mut model.members {
        if let Some(n) = order {
            m.order = n;
        }
        if let Some(e) = elems_per_edge {
            m.elements = e;
        }
    }
    let solution = assemble_and_solve(&model)?;
    let file = SolutionFile {
        schema_version: SCHEMA_VERSION,
        model,
        solution,
    };
    write_json(out, &file)?;
    Ok(file)
}

pub fn load_dataset_config(path: Option<&Path>) -> Result<DatasetConfig> {
    let config = match path {
        Some(p) => read_json(p)?,
        None => DatasetConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

pub fn load_train_file(path: Option<&Path>) -> Result<TrainFile> {
    let file: TrainFile = match path {
        Some(p) => read_json(p)?,
        None => TrainFile::default(),
    };
    check_schema(file.schema_version)?;
    file.training
        .validate(&file.sobolev)
        .map_err(|e| ExperimentError::Usage(e.to_string()))?;
    Ok(file)
}

pub fn gen_dataset(config: &DatasetConfig, n_train: usize, n_test: usize, seed: u64, out: &Path) -> Result<Dataset> {
    let data = generate(config, n_train, n_test, seed)?;
    write_dataset(out, &data)?;
    Ok(data)
}

/// History CSV with one row per completed epoch.
pub fn write_history(path: &Path, result: &TrainingResult) -> Result<()> {
    let err = |e: csv::Error| ExperimentError::Output {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for rec in &result.state.history {
        w.serialize(rec).map_err(err)?;
    }
    w.flush().map_err(|source| ExperimentError::Output {
        path: path.to_path_buf(),
        source,
    })
}

pub fn default_history_path(model: &Path) -> PathBuf {
    model.with_extension("history.csv")
}

/// Trains on in-memory records; the model file is returned even when
/// training stopped early.
pub fn train_records(records: &[DatasetRecord], settings: &TrainFile) -> Result<(ModelFile, TrainingResult)> {
    let mesh = records
        .first()
        .map(|r| r.mesh)
        .ok_or_else(|| ExperimentError::Usage("dataset has no records".into()))?;
    if records.iter().any(|r| r.mesh != mesh) {
        return Err(ExperimentError::MeshMismatch("dataset mixes discretizations".into()));
    }
    let (set, samples) = training_set(records)?;
    let result = train_surrogate(&set, &settings.training, &settings.sobolev)?;
    let file = ModelFile {
        schema_version: SCHEMA_VERSION,
        mesh,
        train_samples: samples,
        surrogate: result
            .model
            .to_artifact(&settings.training, &settings.sobolev, &result.outcome),
    };
    Ok((file, result))
}

/// Trains from a dataset file, writes the model and history, and reports a
/// divergence stop as an error after writing both.
pub fn train(dataset: &Path, config: Option<&Path>, out: &Path, history: Option<&Path>) -> Result<ModelFile> {
    let settings = load_train_file(config)?;
    let records = read_records(dataset)?;
    let (file, result) = train_records(&records, &settings)?;
    write_json(out, &file)?;
    let history = history
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_history_path(out));
    write_history(&history, &result)?;
    match result.outcome {
        TrainOutcome::Completed => Ok(file),
        TrainOutcome::Diverged { epoch, reason } => Err(ExperimentError::Diverged { epoch, reason }),
    }
}

pub fn eval(model: &Path, dataset: &Path, report: &Path) -> Result<ExperimentReport> {
    let file: ModelFile = read_json(model)?;
    let surrogate = file.model()?;
    let manifest = read_manifest(dataset)?;
    if manifest.mesh != file.mesh {
        return Err(ExperimentError::MeshMismatch(format!(
            "model trained on {:?}, dataset uses {:?}",
            file.mesh, manifest.mesh
        )));
    }
    let records = read_records(dataset)?;
    let summary = evaluate(&surrogate, &manifest.config, &records)?;
    let out = ExperimentReport::new(vec![summary]);
    write_json(report, &out)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub order: usize,
    pub elems_per_edge: usize,
    pub h1_mean: Option<f64>,
    pub h1_std: Option<f64>,
    pub relative_mean: Option<f64>,
    pub relative_std: Option<f64>,
    /// H¹ distance of the VEM reference to itself.
    pub vem_self_h1: Option<f64>,
    pub status: String,
}

pub struct ConvergenceSettings {
    pub base: DatasetConfig,
    pub training: TrainFile,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

/// Generates, trains and evaluates every `(order, elems)` configuration.
/// Failures are recorded in the row status and the sweep continues.
pub fn convergence(
    orders: &[usize],
    elems: &[usize],
    settings: &ConvergenceSettings,
    out: &Path,
) -> Result<Vec<CurveRow>> {
    if orders.is_empty() || elems.is_empty() {
        return Err(ExperimentError::Usage(
            "need at least one order and one element count".into(),
        ));
    }
    let mut rows = Vec::new();
    for &order in orders {
        for &n in elems {
            let config = DatasetConfig {
                order,
                elems_per_edge: n,
                ..settings.base.clone()
            };
            let run = || -> Result<(ConfigurationReport, f64)> {
                let data = generate(&config, settings.n_train, settings.n_test, settings.seed)?;
                let (file, result) = train_records(&data.train, &settings.training)?;
                if let TrainOutcome::Diverged { epoch, reason } = result.outcome {
                    return Err(ExperimentError::Diverged { epoch, reason });
                }
                let model = file.model()?;
                let summary = evaluate(&model, &config, &data.test)?;
                Ok((summary, self_consistency(&config, &data.test)?))
            };
            rows.push(match run() {
                Ok((s, vem)) => CurveRow {
                    order,
                    elems_per_edge: n,
                    h1_mean: Some(s.h1_mean),
                    h1_std: Some(s.h1_std),
                    relative_mean: Some(s.relative_mean),
                    relative_std: Some(s.relative_std),
                    vem_self_h1: Some(vem),
                    status: "ok".into(),
                },
                Err(e) => CurveRow {
                    order,
                    elems_per_edge: n,
                    h1_mean: None,
                    h1_std: None,
                    relative_mean: None,
                    relative_std: None,
                    vem_self_h1: None,
                    status: e.to_string(),
                },
            });
        }
    }
    let err = |e: csv::Error| ExperimentError::Output {
        path: out.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    };
    let mut w = csv::Writer::from_path(out).map_err(err)?;
    for r in &rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|source| ExperimentError::Output {
        path: out.to_path_buf(),
        source,
    })?;
    Ok(rows)
}
