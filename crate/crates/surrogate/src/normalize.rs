//! Feature and target standardization.
//!
//! Node coordinates are standardized directly; material features `(E, A, I)`
//! in log space. Targets are first multiplied by a compliance factor
//! `E I / (E I)_ref` so that samples whose stiffness differs by decades share
//! one output scale, then standardized per component.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

/// Position of `E` and `I` in the material feature vector `(E, A, I)`.
const MODULUS: usize = 0;
const INERTIA: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub node_mean: Vec<f64>,
    pub node_std: Vec<f64>,
    /// Statistics of `ln E, ln A, ln I`.
    pub material_mean: Vec<f64>,
    pub material_std: Vec<f64>,
    pub output_mean: Vec<f64>,
    pub output_std: Vec<f64>,
    /// `(E I)_ref`, or `None` when targets are not compliance scaled.
    pub compliance_reference: Option<f64>,
}

fn mean_std(columns: &Array2<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = columns.nrows() as f64;
    let mean = columns.mean_axis(Axis(0)).expect("nonempty");
    let std = columns
        .axis_iter(Axis(1))
        .zip(mean.iter())
        .map(|(col, &m)| {
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let s = var.sqrt();
            // constant features keep unit scale
            if s > 1e-12 * m.abs().max(1.0) {
                s
            } else {
                1.0
            }
        })
        .collect();
    (mean.to_vec(), std)
}

impl NormalizationStats {
    /// Fits the statistics on unique node rows, unique material rows and the
    /// physical targets of every `(node, material)` pair.
    pub fn fit(
        nodes: &Array2<f64>,
        materials: &Array2<f64>,
        pairs: &[(usize, usize)],
        targets: &Array2<f64>,
        compliance_scaling: bool,
    ) -> Self {
        let (node_mean, node_std) = mean_std(nodes);
        let logs = materials.mapv(f64::ln);
        let (material_mean, material_std) = mean_std(&logs);
        let compliance_reference = compliance_scaling.then(|| {
            let mean_log = logs.rows().into_iter().map(|r| r[MODULUS] + r[INERTIA]).sum::<f64>() / logs.nrows() as f64;
            mean_log.exp()
        });
        let mut stats = Self {
            node_mean,
            node_std,
            material_mean,
            material_std,
            output_mean: vec![0.0; targets.ncols()],
            output_std: vec![1.0; targets.ncols()],
            compliance_reference,
        };
        let mut scaled = targets.clone();
        for (mut row, &(_, mi)) in scaled.rows_mut().into_iter().zip(pairs) {
            row *= stats.output_scale(materials.row(mi).as_slice().expect("row"));
        }
        let (output_mean, output_std) = mean_std(&scaled);
        stats.output_mean = output_mean;
        stats.output_std = output_std;
        stats
    }

    /// Factor `s` applied to physical outputs before standardization.
    pub fn output_scale(&self, material: &[f64]) -> f64 {
        match self.compliance_reference {
            Some(r) => material[MODULUS] * material[INERTIA] / r,
            None => 1.0,
        }
    }

    pub fn normalize_node(&self, node: &[f64]) -> Vec<f64> {
        node.iter()
            .zip(self.node_mean.iter().zip(&self.node_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn normalize_material(&self, material: &[f64]) -> Vec<f64> {
        material
            .iter()
            .zip(self.material_mean.iter().zip(&self.material_std))
            .map(|(v, (m, s))| (v.ln() - m) / s)
            .collect()
    }

    /// Shift of the normalized `ln E` feature when `E` is scaled by `c`.
    pub fn modulus_shift(&self, c: f64) -> f64 {
        c.ln() / self.material_std[MODULUS]
    }

    pub fn modulus_index(&self) -> usize {
        MODULUS
    }

    pub fn encode_output(&self, output: &[f64], material: &[f64]) -> Vec<f64> {
        let s = self.output_scale(material);
        output
            .iter()
            .zip(self.output_mean.iter().zip(&self.output_std))
            .map(|(u, (m, sd))| (u * s - m) / sd)
            .collect()
    }

    pub fn decode_output(&self, normalized: &[f64], material: &[f64]) -> Vec<f64> {
        let s = self.output_scale(material);
        normalized
            .iter()
            .zip(self.output_mean.iter().zip(&self.output_std))
            .map(|(y, (m, sd))| (m + sd * y) / s)
            .collect()
    }

    /// Factor taking `d output_o / d x_d` from physical to normalized units.
    pub fn jacobian_factor(&self, output: usize, coordinate: usize, material: &[f64]) -> f64 {
        self.output_scale(material) * self.node_std[coordinate] / self.output_std[output]
    }
}
