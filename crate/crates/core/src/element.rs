//! Single beam element of arbitrary polynomial order.
//!
//! The element carries the nodal deflections and rotations plus `n - 3`
//! internal moments
//!
//! ```text
//! m_{k-4} = 1 / L^(k-3) * integral_0^L x^(k-4) w_h dx,   4 <= k <= n
//! ```
//!
//! and projects the (virtual) deflection onto the monomials `1, x, ..., x^n`
//! in local coordinates `x in [0, L]`. The bending DOF vector is laid out as
//! `[w1, theta1, w2, theta2, m_0, ..., m_{n-4}]`.
//!
//! No stabilization term is added: the projection kernel is exactly the two
//! rigid modes, so the consistency part already is the full stiffness.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, VemError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    /// Young's modulus E.
    pub elastic_modulus: f64,
    /// Second moment of area I.
    pub inertia_moment: f64,
    /// Cross-section area A.
    pub area: f64,
}

impl MaterialParams {
    pub fn new(elastic_modulus: f64, inertia_moment: f64, area: f64) -> Result<Self> {
        let m = Self {
            elastic_modulus,
            inertia_moment,
            area,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.elastic_modulus) && ok(self.inertia_moment) && ok(self.area) {
            Ok(())
        } else {
            Err(VemError::InvalidMaterial {
                e: self.elastic_modulus,
                a: self.area,
                i: self.inertia_moment,
            })
        }
    }

    /// Flexural rigidity E·I.
    pub fn flexural_rigidity(&self) -> f64 {
        self.elastic_modulus * self.inertia_moment
    }

    /// Axial rigidity E·A.
    pub fn axial_rigidity(&self) -> f64 {
        self.elastic_modulus * self.area
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementSpec {
    pub order: usize,
    pub length: f64,
    pub material: MaterialParams,
}

impl ElementSpec {
    pub fn new(order: usize, length: f64, material: MaterialParams) -> Result<Self> {
        let spec = Self {
            order,
            length,
            material,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.order < 3 {
            return Err(VemError::InvalidOrder(self.order));
        }
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(VemError::InvalidLength(self.length));
        }
        self.material.validate()
    }

    pub fn moment_count(&self) -> usize {
        self.order - 3
    }

    /// Size of the bending DOF vector, `n + 1`.
    pub fn bending_dofs(&self) -> usize {
        4 + self.moment_count()
    }
}

/// Element load: transverse polynomial `q(x) = sum q_j x^j` in local
/// coordinates plus point forces/moments applied at the element ends.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadSpec {
    /// Coefficients `q_0, q_1, ...`; degree must not exceed `n - 4`.
    #[serde(default)]
    pub distributed: Vec<f64>,
    /// End loads aligned with `[w1, theta1, w2, theta2]`.
    #[serde(default)]
    pub nodal: [f64; 4],
}

impl LoadSpec {
    pub fn uniform(q0: f64) -> Self {
        Self {
            distributed: vec![q0],
            nodal: [0.0; 4],
        }
    }

    /// Degree of the distributed part ignoring trailing zero coefficients.
    pub fn degree(&self) -> Option<usize> {
        self.distributed.iter().rposition(|&q| q != 0.0)
    }

    /// Re-expands the distributed polynomial about `offset`, i.e. returns the
    /// coefficients of `x -> q(offset + x)`.
    pub fn shifted(&self, offset: f64) -> Self {
        let d = &self.distributed;
        let mut out = vec![0.0; d.len()];
        for (j, &qj) in d.iter().enumerate() {
            // (offset + x)^j = sum_i C(j, i) offset^(j-i) x^i
            let mut binom = 1.0;
            for (i, o) in out.iter_mut().enumerate().take(j + 1) {
                *o += qj * binom * offset.powi((j - i) as i32);
                binom = binom * (j - i) as f64 / (i + 1) as f64;
            }
        }
        Self {
            distributed: out,
            nodal: self.nodal,
        }
    }

    /// Evaluates the distributed part at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.distributed.iter().rev().fold(0.0, |acc, &q| acc * x + q)
    }
}

/// `integral_0^L x^k dx`.
pub fn monomial_integral(length: f64, k: i32) -> Result<f64> {
    if k < 0 {
        return Err(VemError::NegativePower(k));
    }
    if !(length.is_finite() && length > 0.0) {
        return Err(VemError::InvalidLength(length));
    }
    Ok(length.powi(k + 1) / (k + 1) as f64)
}

fn falling(j: usize, depth: usize) -> f64 {
    (0..depth).map(|t| j as f64 - t as f64).product()
}

/// Gram matrix of the curvatures `p''` for `p = x^2, ..., x^n`.
pub fn build_g(spec: &ElementSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let n = spec.order;
    let l = spec.length;
    let size = n - 1;
    let mut g = DMatrix::zeros(size, size);
    for row in 0..size {
        let j = row + 2;
        for col in 0..size {
            let k = col + 2;
            g[(row, col)] = falling(j, 2) * falling(k, 2) * monomial_integral(l, (j + k - 4) as i32)?;
        }
    }
    Ok(g)
}

/// Right-hand side of the curvature projection: row `j` holds the twice
/// integrated-by-parts form of `integral p'' w_h''` for `p = x^j` as a linear
/// functional on the bending DOF vector.
pub fn build_r(spec: &ElementSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let n = spec.order;
    let l = spec.length;
    let mut r = DMatrix::zeros(n - 1, n + 1);
    for row in 0..n - 1 {
        let j = row + 2;
        // [p'' w']_0^L
        r[(row, 3)] += falling(j, 2) * l.powi(j as i32 - 2);
        if j == 2 {
            r[(row, 1)] -= 2.0;
        }
        // -[p''' w]_0^L
        if j >= 3 {
            r[(row, 2)] -= falling(j, 3) * l.powi(j as i32 - 3);
        }
        if j == 3 {
            r[(row, 0)] += 6.0;
        }
        // integral p'''' w = j(j-1)(j-2)(j-3) L^(j-3) m_{j-4}
        if j >= 4 {
            r[(row, 4 + j - 4)] += falling(j, 4) * l.powi(j as i32 - 3);
        }
    }
    Ok(r)
}

/// Projection matrices of one element.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSystem {
    pub spec: ElementSpec,
    pub g: DMatrix<f64>,
    pub r: DMatrix<f64>,
    /// `P = G^-1 r`, maps the bending DOF vector to `a_3, ..., a_{n+1}`.
    pub p: DMatrix<f64>,
}

impl ProjectionSystem {
    /// Full coefficient vector `a_1, ..., a_{n+1}` of the projected
    /// polynomial `sum a_{k+1} x^k`.
    pub fn coefficients(&self, dofs: &DVector<f64>) -> DVector<f64> {
        assert_eq!(dofs.len(), self.spec.bending_dofs(), "dof vector length");
        let upper = &self.p * dofs;
        let mut a = DVector::zeros(self.spec.order + 1);
        a[0] = dofs[0];
        a[1] = dofs[1];
        a.rows_mut(2, upper.len()).copy_from(&upper);
        a
    }
}

/// Builds `G`, `r` and `P = G^-1 r`.
///
/// `P` is obtained on the unit element in the scaled coordinate `xi = x / L`
/// and mapped back: rotations scale by `L`, coefficient `a_{k+1}` by
/// `L^-k`. This keeps the solve independent of the element length.
pub fn build_projection(spec: &ElementSpec) -> Result<ProjectionSystem> {
    let g = build_g(spec)?;
    let r = build_r(spec)?;
    let unit = ElementSpec { length: 1.0, ..*spec };
    let g1 = build_g(&unit)?;
    let r1 = build_r(&unit)?;
    let singular = || VemError::SingularProjection {
        order: spec.order,
        length: spec.length,
    };
    let size = g1.nrows();
    let scale = DVector::from_iterator(size, (0..size).map(|i| 1.0 / g1[(i, i)].sqrt()));
    let scaled = DMatrix::from_fn(size, size, |i, j| scale[i] * g1[(i, j)] * scale[j]);
    let chol = scaled.cholesky().ok_or_else(singular)?;
    let mut rhs = r1;
    for (i, mut row) in rhs.row_iter_mut().enumerate() {
        row *= scale[i];
    }
    let mut p = chol.solve(&rhs);
    let l = spec.length;
    for (i, mut row) in p.row_iter_mut().enumerate() {
        // row i holds a_{i+3}, the coefficient of x^(i+2)
        row *= scale[i] / l.powi(i as i32 + 2);
    }
    for col in [1, 3] {
        p.column_mut(col).scale_mut(l);
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(singular());
    }
    Ok(ProjectionSystem { spec: *spec, g, r, p })
}

/// Bending stiffness `K = E I P^T G P`, size `(n+1) x (n+1)`.
pub fn element_stiffness(spec: &ElementSpec) -> Result<DMatrix<f64>> {
    let proj = build_projection(spec)?;
    Ok(stiffness_from_projection(&proj))
}

pub(crate) fn stiffness_from_projection(proj: &ProjectionSystem) -> DMatrix<f64> {
    let k = proj.p.transpose() * &proj.g * &proj.p * proj.spec.material.flexural_rigidity();
    // symmetrize away roundoff
    (&k + k.transpose()) * 0.5
}

/// Bending element with its internal moments statically condensed out.
///
/// For nodal values `u_c = [w1, th1, w2, th2]` the moments minimizing the
/// element energy under a moment-row load `r_i` are
/// `m = K_ii^-1 r_i - S u_c`, and the nodal stiffness is the Schur complement
/// `K_cc - K_ci K_ii^-1 K_ic`. Everything is computed on the unit element by
/// an orthogonal factorization of the curvature map, so no large entries
/// cancel.
#[derive(Debug, Clone)]
pub struct CondensedBending {
    pub spec: ElementSpec,
    /// `4 x 4` nodal stiffness.
    pub stiffness: DMatrix<f64>,
    /// `S = K_ii^-1 K_ic`, `(n-3) x 4`.
    pub recovery: DMatrix<f64>,
    /// Upper factor `R` of the unit moment block, `K_ii = EI / L^3 R^T R`.
    moment_factor: DMatrix<f64>,
}

impl CondensedBending {
    pub fn new(spec: &ElementSpec) -> Result<Self> {
        let unit = ElementSpec {
            length: 1.0,
            material: MaterialParams {
                elastic_modulus: 1.0,
                inertia_moment: 1.0,
                area: 1.0,
            },
            ..*spec
        };
        let singular = || VemError::SingularProjection {
            order: spec.order,
            length: spec.length,
        };
        let lower = build_g(&unit)?.cholesky().ok_or_else(singular)?.l();
        // K = P^T G P = B^T B with B = L^-1 r on the unit element
        let b = lower.solve_lower_triangular(&build_r(&unit)?).ok_or_else(singular)?;
        let m = spec.moment_count();
        let b_c = b.columns(0, 4).into_owned();
        let (stiffness_unit, recovery, moment_factor) = if m == 0 {
            (b_c.transpose() * &b_c, DMatrix::zeros(0, 4), DMatrix::zeros(0, 0))
        } else {
            let qr = b.columns(4, m).into_owned().qr();
            let (q, r) = (qr.q(), qr.r());
            let proj_c = q.transpose() * &b_c;
            let rest = &b_c - &q * &proj_c;
            let s = r.clone().solve_upper_triangular(&proj_c).ok_or_else(singular)?;
            (rest.transpose() * &rest, s, r)
        };
        let l = spec.length;
        let dc = [1.0, l, 1.0, l];
        let factor = spec.material.flexural_rigidity() / l.powi(3);
        let stiffness = DMatrix::from_fn(4, 4, |i, j| {
            let v = 0.5 * (stiffness_unit[(i, j)] + stiffness_unit[(j, i)]);
            factor * dc[i] * v * dc[j]
        });
        let recovery = DMatrix::from_fn(m, 4, |i, j| recovery[(i, j)] * dc[j]);
        Ok(Self {
            spec: *spec,
            stiffness,
            recovery,
            moment_factor,
        })
    }

    /// `K_ii^-1 r`.
    pub fn solve_moments(&self, r: &DVector<f64>) -> DVector<f64> {
        if r.is_empty() {
            return DVector::zeros(0);
        }
        let r_factor = &self.moment_factor;
        let y = r_factor.tr_solve_upper_triangular(r).expect("nonsingular moment block");
        let x = r_factor.solve_upper_triangular(&y).expect("nonsingular moment block");
        let l = self.spec.length;
        x * (l.powi(3) / self.spec.material.flexural_rigidity())
    }

    /// Nodal load `f_c - S^T f_i` carried by the condensed element.
    pub fn condense_load(&self, f: &DVector<f64>) -> DVector<f64> {
        let fi = f.rows(4, self.spec.moment_count()).into_owned();
        // K_ci K_ii^-1 = S^T
        f.rows(0, 4) - self.recovery.transpose() * fi
    }

    /// Moments for the nodal values `u_c` under the moment-row load `r_i`.
    pub fn recover(&self, u_c: &DVector<f64>, r_i: &DVector<f64>) -> DVector<f64> {
        self.solve_moments(r_i) - &self.recovery * u_c
    }
}

/// Bending load vector. The distributed polynomial contributes
/// `q_{k-4} L^(k-3)` to the moment DOF `m_{k-4}`; end loads go straight to
/// the nodal slots.
pub fn element_load(spec: &ElementSpec, load: &LoadSpec) -> Result<DVector<f64>> {
    spec.validate()?;
    let mut f = DVector::zeros(spec.bending_dofs());
    for (slot, &v) in load.nodal.iter().enumerate() {
        f[slot] = v;
    }
    if let Some(degree) = load.degree() {
        if degree + 4 > spec.order {
            return Err(VemError::UnsupportedLoad {
                degree,
                order: spec.order,
            });
        }
        for (j, &q) in load.distributed.iter().enumerate().take(degree + 1) {
            f[4 + j] += q * spec.length.powi(j as i32 + 1);
        }
    }
    Ok(f)
}

/// Two-node bar stiffness `EA/L [[1,-1],[-1,1]]` for the axial DOFs.
pub fn axial_stiffness(spec: &ElementSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let k = spec.material.axial_rigidity() / spec.length;
    Ok(DMatrix::from_row_slice(2, 2, &[k, -k, -k, k]))
}

/// Bending DOF vector sampled from an explicit polynomial `w(x) = sum c_k x^k`
/// (nodal values, slopes and exact internal moments).
pub fn dofs_from_polynomial(spec: &ElementSpec, coeffs: &[f64]) -> DVector<f64> {
    let l = spec.length;
    let value = |x: f64| coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c);
    let slope = |x: f64| {
        coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &c)| acc * x + k as f64 * c)
    };
    let mut w = DVector::zeros(spec.bending_dofs());
    w[0] = value(0.0);
    w[1] = slope(0.0);
    w[2] = value(l);
    w[3] = slope(l);
    for j in 0..spec.moment_count() {
        // m_j = L^-(j+1) * integral x^j w
        let integral: f64 = coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| c * l.powi((i + j + 1) as i32) / (i + j + 1) as f64)
            .sum();
        w[4 + j] = integral / l.powi(j as i32 + 1);
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit(order: usize, length: f64) -> ElementSpec {
        ElementSpec::new(order, length, MaterialParams::new(1.0, 1.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn monomial_integral_values() {
        assert_eq!(monomial_integral(2.0, 0).unwrap(), 2.0);
        assert_eq!(monomial_integral(1.0, 3).unwrap(), 0.25);
        assert_relative_eq!(monomial_integral(2.0, 2).unwrap(), 8.0 / 3.0);
        assert!(matches!(monomial_integral(1.0, -1), Err(VemError::NegativePower(-1))));
    }

    #[test]
    fn rejects_bad_specs() {
        let m = MaterialParams::new(1.0, 1.0, 1.0).unwrap();
        assert!(matches!(ElementSpec::new(2, 1.0, m), Err(VemError::InvalidOrder(2))));
        assert!(ElementSpec::new(3, 0.0, m).is_err());
        assert!(MaterialParams::new(1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn g_small_cases() {
        let g = build_g(&unit(3, 1.0)).unwrap();
        assert_eq!(g, DMatrix::from_row_slice(2, 2, &[4.0, 6.0, 6.0, 12.0]));
        let g = build_g(&unit(3, 2.0)).unwrap();
        assert_eq!(g, DMatrix::from_row_slice(2, 2, &[8.0, 24.0, 24.0, 96.0]));
    }

    #[test]
    fn r_small_cases() {
        let r = build_r(&unit(3, 1.0)).unwrap();
        let want = DMatrix::from_row_slice(2, 4, &[0., -2., 0., 2., 6., 0., -6., 6.]);
        assert_eq!(r, want);
        let r = build_r(&unit(3, 2.0)).unwrap();
        assert_eq!(r.row(1).iter().copied().collect::<Vec<_>>(), vec![6., 0., -6., 12.]);
        assert_eq!(r.ncols(), 4);
    }

    #[test]
    fn projection_cubic_unit() {
        let proj = build_projection(&unit(3, 1.0)).unwrap();
        let want = DMatrix::from_row_slice(2, 4, &[-3., -2., 3., -1., 2., 1., -2., 1.]);
        assert!((proj.p - want).abs().max() < 1e-12);
    }

    #[test]
    fn rigid_translation_has_no_curvature() {
        for order in 3..=6 {
            let spec = unit(order, 0.7);
            let proj = build_projection(&spec).unwrap();
            let w = dofs_from_polynomial(&spec, &[2.5]);
            let a = proj.coefficients(&w);
            assert_relative_eq!(a[0], 2.5);
            for k in 1..a.len() {
                assert!(a[k].abs() < 1e-10, "order {order}: a[{k}] = {}", a[k]);
            }
        }
    }

    #[test]
    fn hermite_stiffness() {
        let k = element_stiffness(&unit(3, 1.0)).unwrap();
        let want = DMatrix::from_row_slice(
            4,
            4,
            &[12., 6., -12., 6., 6., 4., -6., 2., -12., -6., 12., -6., 6., 2., -6., 4.],
        );
        assert!((k - want).abs().max() < 1e-10);
    }

    #[test]
    fn quartic_stiffness_rank_three() {
        let k = element_stiffness(&unit(4, 1.0)).unwrap();
        let sv = k.singular_values();
        let tol = 1e-10 * sv.max();
        assert_eq!(sv.iter().filter(|&&s| s > tol).count(), 3);
    }

    #[test]
    fn load_vector() {
        let f = element_load(&unit(4, 2.0), &LoadSpec::uniform(5.0)).unwrap();
        assert_eq!(f.as_slice(), &[0., 0., 0., 0., 10.]);

        let f = element_load(
            &unit(5, 1.0),
            &LoadSpec {
                distributed: vec![0.0, 0.0],
                nodal: [0.0; 4],
            },
        )
        .unwrap();
        assert!(f.iter().all(|&v| v == 0.0));

        let point = LoadSpec {
            distributed: vec![],
            nodal: [0.0, 0.0, 3.5, 0.0],
        };
        let f = element_load(&unit(4, 1.0), &point).unwrap();
        assert_eq!(f.as_slice(), &[0., 0., 3.5, 0., 0.]);
    }

    #[test]
    fn distributed_load_on_cubic_is_rejected() {
        let err = element_load(&unit(3, 1.0), &LoadSpec::uniform(1.0)).unwrap_err();
        assert!(matches!(err, VemError::UnsupportedLoad { degree: 0, order: 3 }));
        // a linear load needs order 5
        let lin = LoadSpec {
            distributed: vec![1.0, 1.0],
            nodal: [0.0; 4],
        };
        assert!(element_load(&unit(4, 1.0), &lin).is_err());
        assert!(element_load(&unit(5, 1.0), &lin).is_ok());
    }

    #[test]
    fn axial_values() {
        let m = MaterialParams::new(2.0, 1.0, 3.0).unwrap();
        let k = axial_stiffness(&ElementSpec::new(3, 2.0, m).unwrap()).unwrap();
        assert_eq!(k, DMatrix::from_row_slice(2, 2, &[3., -3., -3., 3.]));
        let k = axial_stiffness(&unit(3, 1.0)).unwrap();
        assert_eq!(k.row_sum().iter().copied().collect::<Vec<_>>(), vec![0., 0.]);
    }

    #[test]
    fn shifted_load_matches_evaluation() {
        let load = LoadSpec {
            distributed: vec![1.0, -2.0, 0.5],
            nodal: [0.0; 4],
        };
        let s = load.shifted(1.3);
        for &x in &[0.0, 0.2, 0.9] {
            assert_relative_eq!(s.eval(x), load.eval(1.3 + x), epsilon = 1e-12);
        }
    }
}
