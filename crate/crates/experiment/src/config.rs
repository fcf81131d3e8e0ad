//! JSON configuration documents.

use serde::{Deserialize, Serialize};
use vembeam_surrogate::{SobolevConfig, TrainingConfig};

use crate::error::{ExperimentError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Discretization shared by every sample of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshDescriptor {
    pub beam_length: f64,
    pub elems_per_edge: usize,
    pub order: usize,
}

/// Closed interval sampled log-uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRange {
    pub min: f64,
    pub max: f64,
}

impl LogRange {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    fn validate(&self, what: &str) -> Result<()> {
        if self.min > 0.0 && self.max >= self.min && self.max.is_finite() {
            Ok(())
        } else {
            Err(ExperimentError::Usage(format!(
                "{what} range must satisfy 0 < min <= max, got [{}, {}]",
                self.min, self.max
            )))
        }
    }
}

/// Portico geometry, loading and material sampling ranges. The defaults are
/// project choices, not measured values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub schema_version: u32,
    pub beam_length: f64,
    pub elems_per_edge: usize,
    pub order: usize,
    /// Uniform transverse load on the beam, N/m (negative is downward).
    pub beam_load: f64,
    /// Young's modulus, Pa.
    pub elastic_modulus: LogRange,
    /// Cross-section area, m².
    pub area: LogRange,
    /// Second moment of area, m⁴.
    pub inertia_moment: LogRange,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            beam_length: 2.0,
            elems_per_edge: 24,
            order: 4,
            beam_load: -1e4,
            elastic_modulus: LogRange::new(50e9, 250e9),
            area: LogRange::new(1e-3, 1e-2),
            inertia_moment: LogRange::new(1e-6, 1e-4),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        check_schema(self.schema_version)?;
        if !(self.beam_length > 0.0 && self.beam_length.is_finite()) {
            return Err(ExperimentError::Usage("beam length must be positive".into()));
        }
        if self.elems_per_edge == 0 {
            return Err(ExperimentError::Usage("elems_per_edge must be at least 1".into()));
        }
        if !self.beam_load.is_finite() {
            return Err(ExperimentError::Usage("beam load must be finite".into()));
        }
        self.elastic_modulus.validate("elastic modulus")?;
        self.area.validate("area")?;
        self.inertia_moment.validate("inertia moment")
    }

    pub fn mesh(&self) -> MeshDescriptor {
        MeshDescriptor {
            beam_length: self.beam_length,
            elems_per_edge: self.elems_per_edge,
            order: self.order,
        }
    }
}

/// Network, optimizer and Sobolev settings for `train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainFile {
    pub schema_version: u32,
    pub training: TrainingConfig,
    pub sobolev: SobolevConfig,
}

impl Default for TrainFile {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            training: TrainingConfig::default(),
            sobolev: SobolevConfig::default(),
        }
    }
}

pub fn check_schema(version: u32) -> Result<()> {
    if version == SCHEMA_VERSION {
        Ok(())
    } else {
        Err(ExperimentError::Usage(format!(
            "unsupported schema_version {version} (expected {SCHEMA_VERSION})"
        )))
    }
}
