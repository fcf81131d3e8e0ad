//! Trained surrogate in physical units and its serialized form.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SurrogateError};
use crate::network::{Activation, Batch, Layer, Mlp, NetworkParameters};
use crate::normalize::NormalizationStats;
use crate::train::{SobolevConfig, TrainOutcome, TrainingConfig};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    pub params: NetworkParameters,
    pub normalization: NormalizationStats,
}

/// Physical predictions for a set of pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// One row per pair.
    pub outputs: Array2<f64>,
    /// `jacobians[k][(row, o)] = d output_o / d x_k`.
    pub jacobians: Vec<Array2<f64>>,
}

impl SurrogateModel {
    /// Evaluates the `(node, material)` pairs given physical node and
    /// material rows.
    pub fn predict(
        &self,
        nodes: &Array2<f64>,
        materials: &Array2<f64>,
        pairs: &[(usize, usize)],
    ) -> Result<Prediction> {
        if pairs.is_empty() {
            return Err(SurrogateError::EmptyBatch);
        }
        let stats = &self.normalization;
        let norm = |a: &Array2<f64>, f: &dyn Fn(&[f64]) -> Vec<f64>| -> Array2<f64> {
            let mut out = a.clone();
            for (mut dst, src) in out.rows_mut().into_iter().zip(a.rows()) {
                dst.assign(&Array1::from(f(&src.to_vec())));
            }
            out
        };
        let batch = Batch {
            nodes: norm(nodes, &|r| stats.normalize_node(r)),
            materials: norm(materials, &|r| stats.normalize_material(r)),
            pairs: pairs.to_vec(),
        };
        let fwd = self.params.forward(&batch, true)?;
        let mut outputs = fwd.outputs().clone();
        let mut jacobians = fwd.output_tangents().to_vec();
        for (r, &(_, mi)) in pairs.iter().enumerate() {
            let m = materials.row(mi).to_vec();
            let decoded = stats.decode_output(&outputs.row(r).to_vec(), &m);
            outputs.row_mut(r).assign(&Array1::from(decoded));
            for (k, jac) in jacobians.iter_mut().enumerate() {
                for o in 0..jac.ncols() {
                    jac[(r, o)] /= stats.jacobian_factor(o, k, &m);
                }
            }
        }
        Ok(Prediction { outputs, jacobians })
    }

    pub fn to_artifact(
        &self,
        training: &TrainingConfig,
        sobolev: &SobolevConfig,
        outcome: &TrainOutcome,
    ) -> ModelArtifact {
        let record = |mlp: &Mlp| mlp.layers.iter().map(LayerRecord::from).collect();
        ModelArtifact {
            schema_version: MODEL_SCHEMA_VERSION,
            coordinate_dims: self.params.coordinate_dims,
            node: record(&self.params.node),
            material: record(&self.params.material),
            head: record(&self.params.head),
            normalization: self.normalization.clone(),
            training: training.clone(),
            sobolev: *sobolev,
            outcome: outcome.clone(),
        }
    }
}

/// Serialized layer; `weights` is the row-major `inputs x outputs` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl From<&Layer> for LayerRecord {
    fn from(l: &Layer) -> Self {
        Self {
            inputs: l.inputs(),
            outputs: l.outputs(),
            activation: l.activation,
            weights: l.weights.iter().copied().collect(),
            bias: l.bias.to_vec(),
        }
    }
}

impl LayerRecord {
    fn to_layer(&self) -> Result<Layer> {
        let weights = Array2::from_shape_vec((self.inputs, self.outputs), self.weights.clone()).map_err(|_| {
            SurrogateError::WidthMismatch {
                what: "stored weights",
                expected: self.inputs * self.outputs,
                got: self.weights.len(),
            }
        })?;
        if self.bias.len() != self.outputs {
            return Err(SurrogateError::WidthMismatch {
                what: "stored bias",
                expected: self.outputs,
                got: self.bias.len(),
            });
        }
        Ok(Layer {
            weights,
            bias: Array1::from(self.bias.clone()),
            activation: self.activation,
        })
    }
}

/// Everything needed to reload a model, plus the configuration it was
/// trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub schema_version: u32,
    pub coordinate_dims: usize,
    pub node: Vec<LayerRecord>,
    pub material: Vec<LayerRecord>,
    pub head: Vec<LayerRecord>,
    pub normalization: NormalizationStats,
    pub training: TrainingConfig,
    pub sobolev: SobolevConfig,
    pub outcome: TrainOutcome,
}

impl ModelArtifact {
    pub fn into_model(self) -> Result<SurrogateModel> {
        if self.schema_version != MODEL_SCHEMA_VERSION {
            return Err(SurrogateError::Config(format!(
                "unsupported model schema version {}",
                self.schema_version
            )));
        }
        let mlp = |records: &[LayerRecord]| -> Result<Mlp> {
            if records.is_empty() {
                return Err(SurrogateError::Architecture("stored network has no layers".into()));
            }
            Ok(Mlp {
                layers: records.iter().map(LayerRecord::to_layer).collect::<Result<_>>()?,
            })
        };
        let params = NetworkParameters {
            node: mlp(&self.node)?,
            material: mlp(&self.material)?,
            head: mlp(&self.head)?,
            coordinate_dims: self.coordinate_dims,
        };
        params.check_widths()?;
        Ok(SurrogateModel {
            params,
            normalization: self.normalization,
        })
    }
}
