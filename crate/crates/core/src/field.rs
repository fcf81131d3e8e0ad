//! Displacement fields along frame members and their H¹ distance.
//!
//! Each field is sampled per element in local coordinates: axial and
//! transverse displacement plus their derivatives along the element axis.
//! The frame error sums the componentwise contributions of every element.

use serde::{Deserialize, Serialize};

use crate::assembly::GlobalSolution;
use crate::error::{Result, VemError};
use crate::frame::Mesh;
use crate::quadrature::GaussLegendre;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LocalSample {
    pub axial: f64,
    pub transverse: f64,
    pub d_axial: f64,
    pub d_transverse: f64,
}

/// A displacement field that can be evaluated anywhere along a mesh element.
pub trait MemberField {
    fn element_count(&self) -> usize;

    /// Evaluates the field on `element` at local abscissa `x in [0, L_e]`.
    fn sample(&self, element: usize, x: f64) -> LocalSample;
}

impl MemberField for GlobalSolution {
    fn element_count(&self) -> usize {
        self.elements.len()
    }

    fn sample(&self, element: usize, x: f64) -> LocalSample {
        let el = &self.elements[element];
        LocalSample {
            axial: el.axial_displacement(x),
            transverse: el.deflection(x),
            d_axial: el.axial_strain(),
            d_transverse: el.slope(x),
        }
    }
}

impl<F: MemberField + ?Sized> MemberField for &F {
    fn element_count(&self) -> usize {
        (**self).element_count()
    }

    fn sample(&self, element: usize, x: f64) -> LocalSample {
        (**self).sample(element, x)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub h1_error: f64,
    pub l2_error: f64,
    pub gradient_l2_error: f64,
    /// `h1_error` divided by the H¹ norm of the reference field.
    pub relative_h1: f64,
}

/// H¹ distance between `reference` and `approx` with the default rule of
/// `order + 1` Gauss points per element (exact for polynomial fields).
pub fn h1_error<A: MemberField, B: MemberField>(reference: &A, approx: &B, mesh: &Mesh) -> Result<ErrorReport> {
    h1_error_with_points(reference, approx, mesh, None)
}

pub fn h1_error_with_points<A: MemberField, B: MemberField>(
    reference: &A,
    approx: &B,
    mesh: &Mesh,
    points_per_element: Option<usize>,
) -> Result<ErrorReport> {
    let ne = mesh.element_count();
    if reference.element_count() != ne || approx.element_count() != ne {
        return Err(VemError::MeshMismatch(format!(
            "mesh has {ne} elements, fields have {} and {}",
            reference.element_count(),
            approx.element_count()
        )));
    }
    let mut rules: Vec<(usize, GaussLegendre)> = Vec::new();
    let (mut l2, mut grad, mut norm) = (0.0, 0.0, 0.0);
    for (e, el) in mesh.elements.iter().enumerate() {
        // ceil((2n + 1) / 2) = n + 1 points
        let points = points_per_element.unwrap_or(el.spec.order + 1);
        if !rules.iter().any(|(p, _)| *p == points) {
            rules.push((points, GaussLegendre::new(points)));
        }
        let rule = &rules.iter().find(|(p, _)| *p == points).unwrap().1;
        for (x, w) in rule.mapped(0.0, el.spec.length) {
            let a = reference.sample(e, x);
            let b = approx.sample(e, x);
            let du = a.axial - b.axial;
            let dw = a.transverse - b.transverse;
            let ddu = a.d_axial - b.d_axial;
            let ddw = a.d_transverse - b.d_transverse;
            l2 += w * (du * du + dw * dw);
            grad += w * (ddu * ddu + ddw * ddw);
            norm += w
                * (a.axial * a.axial
                    + a.transverse * a.transverse
                    + a.d_axial * a.d_axial
                    + a.d_transverse * a.d_transverse);
        }
    }
    let h1 = (l2 + grad).sqrt();
    let norm = norm.sqrt();
    Ok(ErrorReport {
        h1_error: h1,
        l2_error: l2.sqrt(),
        gradient_l2_error: grad.sqrt(),
        relative_h1: if norm > 0.0 { h1 / norm } else { h1 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::element::{LoadSpec, MaterialParams};
    use crate::frame::build_portico;

    struct Poly {
        count: usize,
        axial: Vec<f64>,
        transverse: Vec<f64>,
    }

    fn eval(c: &[f64], x: f64) -> (f64, f64) {
        let v = c.iter().rev().fold(0.0, |acc, &a| acc * x + a);
        let d = c
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &a)| acc * x + k as f64 * a);
        (v, d)
    }

    impl MemberField for Poly {
        fn element_count(&self) -> usize {
            self.count
        }
        fn sample(&self, _e: usize, x: f64) -> LocalSample {
            let (a, da) = eval(&self.axial, x);
            let (t, dt) = eval(&self.transverse, x);
            LocalSample {
                axial: a,
                transverse: t,
                d_axial: da,
                d_transverse: dt,
            }
        }
    }

    fn single_unit_mesh() -> Mesh {
        let mut model = build_portico(
            1.0,
            1,
            4,
            MaterialParams::new(1., 1., 1.).unwrap(),
            &LoadSpec::default(),
        )
        .unwrap();
        model.members.truncate(1);
        model.discretize().unwrap()
    }

    #[test]
    fn linear_against_zero() {
        let mesh = single_unit_mesh();
        let u = Poly {
            count: 1,
            axial: vec![],
            transverse: vec![0.0, 1.0],
        };
        let z = Poly {
            count: 1,
            axial: vec![],
            transverse: vec![],
        };
        let r = h1_error(&u, &z, &mesh).unwrap();
        assert!((r.l2_error - 1.0 / 3f64.sqrt()).abs() < 1e-14);
        assert!((r.gradient_l2_error - 1.0).abs() < 1e-14);
        assert!((r.h1_error - (4.0f64 / 3.0).sqrt()).abs() < 1e-14);
        assert!((r.relative_h1 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn identical_fields_and_mismatch() {
        let mesh = single_unit_mesh();
        let u = Poly {
            count: 1,
            axial: vec![0.3, 0.1],
            transverse: vec![1.0, -2.0, 0.5],
        };
        let r = h1_error(&u, &u, &mesh).unwrap();
        assert_eq!(r.h1_error, 0.0);
        let other = Poly {
            count: 2,
            axial: vec![],
            transverse: vec![],
        };
        assert!(matches!(h1_error(&u, &other, &mesh), Err(VemError::MeshMismatch(_))));
    }

    #[test]
    fn doubling_points_is_stable_for_polynomials() {
        let mesh = single_unit_mesh();
        let a = Poly {
            count: 1,
            axial: vec![0.1, 0.2],
            transverse: vec![0.0, 1.0, -3.0, 0.2, 1.5],
        };
        let b = Poly {
            count: 1,
            axial: vec![0.0, 0.25],
            transverse: vec![0.1, 0.7, -2.0],
        };
        let r1 = h1_error(&a, &b, &mesh).unwrap();
        let r2 = h1_error_with_points(&a, &b, &mesh, Some(10)).unwrap();
        assert!((r1.h1_error - r2.h1_error).abs() < 1e-10);
        let sq = r1.l2_error.powi(2) + r1.gradient_l2_error.powi(2);
        assert!((r1.h1_error.powi(2) - sq).abs() <= 1e-12 * sq);
        assert!(r1.h1_error >= r1.l2_error);
    }
}
