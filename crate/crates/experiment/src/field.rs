//! The trained surrogate viewed as a displacement field along the members.

use std::collections::HashMap;

use ndarray::Array2;
use vembeam_core::quadrature::GaussLegendre;
use vembeam_core::{LocalSample, MaterialParams, MemberField, Mesh};
use vembeam_surrogate::SurrogateModel;

use crate::dataset::material_features;
use crate::error::Result;

/// Surrogate predictions at element abscissae, rotated into member axes.
/// Values at the Gauss points of the default error rule are computed in one
/// batch up front; any other abscissa is evaluated on demand.
pub struct SurrogateField<'a> {
    model: &'a SurrogateModel,
    mesh: &'a Mesh,
    material: [f64; 3],
    cache: Vec<HashMap<u64, LocalSample>>,
}

impl<'a> SurrogateField<'a> {
    pub fn new(model: &'a SurrogateModel, mesh: &'a Mesh, material: &MaterialParams) -> Result<Self> {
        let mut field = Self {
            model,
            mesh,
            material: material_features(material),
            cache: vec![HashMap::new(); mesh.element_count()],
        };
        let mut points = Vec::new();
        let mut rules: HashMap<usize, GaussLegendre> = HashMap::new();
        for (e, el) in mesh.elements.iter().enumerate() {
            let rule = rules
                .entry(el.spec.order + 1)
                .or_insert_with(|| GaussLegendre::new(el.spec.order + 1));
            points.extend(rule.mapped(0.0, el.spec.length).map(|(x, _)| (e, x)));
        }
        let samples = field.evaluate(&points)?;
        for (&(e, x), s) in points.iter().zip(samples) {
            field.cache[e].insert(x.to_bits(), s);
        }
        Ok(field)
    }

    fn evaluate(&self, points: &[(usize, f64)]) -> Result<Vec<LocalSample>> {
        let mut nodes = Array2::zeros((points.len(), 2));
        for (r, &(e, x)) in points.iter().enumerate() {
            let (px, py) = self.mesh.elements[e].point(&self.mesh.nodes, x);
            nodes[(r, 0)] = px;
            nodes[(r, 1)] = py;
        }
        let materials = Array2::from_shape_vec((1, 3), self.material.to_vec()).expect("one row");
        let pairs: Vec<(usize, usize)> = (0..points.len()).map(|r| (r, 0)).collect();
        let pred = self.model.predict(&nodes, &materials, &pairs)?;
        Ok(points
            .iter()
            .enumerate()
            .map(|(r, &(e, _))| {
                let el = &self.mesh.elements[e];
                let (c, s) = (el.cos, el.sin);
                let (ux, uy) = (pred.outputs[(r, 0)], pred.outputs[(r, 1)]);
                let along = |o: usize| c * pred.jacobians[0][(r, o)] + s * pred.jacobians[1][(r, o)];
                let (dux, duy) = (along(0), along(1));
                LocalSample {
                    axial: c * ux + s * uy,
                    transverse: -s * ux + c * uy,
                    d_axial: c * dux + s * duy,
                    d_transverse: -s * dux + c * duy,
                }
            })
            .collect())
    }
}

impl MemberField for SurrogateField<'_> {
    fn element_count(&self) -> usize {
        self.mesh.element_count()
    }

    fn sample(&self, element: usize, x: f64) -> LocalSample {
        if let Some(s) = self.cache[element].get(&x.to_bits()) {
            return *s;
        }
        self.evaluate(&[(element, x)])
            .expect("surrogate evaluation on a validated mesh")[0]
    }
}
