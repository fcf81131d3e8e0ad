//! Direct stiffness assembly and solve over virtual beam elements.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::element::{
    axial_stiffness, build_projection, element_load, stiffness_from_projection, CondensedBending, ElementSpec,
    ProjectionSystem,
};
use crate::error::{Result, VemError};
use crate::frame::{FrameModel, Mesh};
use crate::skyline::SkylineMatrix;

const REFINEMENT_STEPS: usize = 2;

/// Local frame-element stiffness and load in layout
/// `[u1, w1, th1, u2, w2, th2, m_0, ...]`.
pub fn local_element_system(
    proj: &ProjectionSystem,
    load: &crate::element::LoadSpec,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let spec = &proj.spec;
    let size = 6 + spec.moment_count();
    let bending_slots: Vec<usize> = [1, 2, 4, 5].into_iter().chain(6..size).collect();
    let kb = stiffness_from_projection(proj);
    let fb = element_load(spec, load)?;
    let ka = axial_stiffness(spec)?;
    let mut k = DMatrix::zeros(size, size);
    let mut f = DVector::zeros(size);
    for (a, &i) in bending_slots.iter().enumerate() {
        f[i] = fb[a];
        for (b, &j) in bending_slots.iter().enumerate() {
            k[(i, j)] = kb[(a, b)];
        }
    }
    for (a, &i) in [0usize, 3].iter().enumerate() {
        for (b, &j) in [0usize, 3].iter().enumerate() {
            k[(i, j)] += ka[(a, b)];
        }
    }
    Ok((k, f))
}

/// Rotation matrix taking global nodal components to local ones for an
/// element of `size` DOFs: `[u, w, th]_local = R [ux, uy, th]_global` per node,
/// moments untouched.
pub fn rotation_matrix(size: usize, angle: f64) -> DMatrix<f64> {
    let (s, c) = angle.sin_cos();
    rotation_from_direction(size, c, s)
}

/// Same as [`rotation_matrix`] from the direction cosines, which keeps
/// axis-aligned members exact.
pub fn rotation_from_direction(size: usize, c: f64, s: f64) -> DMatrix<f64> {
    let mut t = DMatrix::identity(size, size);
    for base in [0, 3] {
        t[(base, base)] = c;
        t[(base, base + 1)] = s;
        t[(base + 1, base)] = -s;
        t[(base + 1, base + 1)] = c;
    }
    t
}

/// Rotates a local element system into global axes: `Kg = T^T K T`, `fg = T^T f`.
pub fn transform_element(k_local: &DMatrix<f64>, f_local: &DVector<f64>, angle: f64) -> (DMatrix<f64>, DVector<f64>) {
    let (s, c) = angle.sin_cos();
    transform_with(k_local, f_local, c, s)
}

fn transform_with(k_local: &DMatrix<f64>, f_local: &DVector<f64>, c: f64, s: f64) -> (DMatrix<f64>, DVector<f64>) {
    let t = rotation_from_direction(k_local.nrows(), c, s);
    let tt = t.transpose();
    let kg = &tt * k_local * &t;
    let kg = (&kg + kg.transpose()) * 0.5;
    (kg, tt * f_local)
}

/// Solved state of one element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementSolution {
    pub length: f64,
    /// Local axial displacements at both ends.
    pub axial: [f64; 2],
    /// Local bending DOFs `[w1, th1, w2, th2, m_0, ...]`.
    pub bending: Vec<f64>,
    /// Projected deflection `sum coefficients[k] x^k`.
    pub coefficients: Vec<f64>,
}

impl ElementSolution {
    pub fn deflection(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &a| acc * x + a)
    }

    pub fn slope(&self, x: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &a)| acc * x + k as f64 * a)
    }

    pub fn curvature(&self, x: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(2)
            .rev()
            .fold(0.0, |acc, (k, &a)| acc * x + (k * (k - 1)) as f64 * a)
    }

    pub fn axial_displacement(&self, x: f64) -> f64 {
        let t = x / self.length;
        (1.0 - t) * self.axial[0] + t * self.axial[1]
    }

    pub fn axial_strain(&self) -> f64 {
        (self.axial[1] - self.axial[0]) / self.length
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalSolution {
    /// Full DOF vector, constrained entries exactly zero.
    pub dofs: Vec<f64>,
    /// `(ux, uy, theta)` per mesh node.
    pub node_displacements: Vec<[f64; 3]>,
    pub elements: Vec<ElementSolution>,
    /// `||K u - f||` over the free DOFs.
    pub residual_norm: f64,
    /// `||f||` over the free DOFs.
    pub load_norm: f64,
}

/// Assembles the frame, eliminates supported DOFs and solves the reduced
/// system by a profile Cholesky factorization.
pub fn assemble_and_solve(model: &FrameModel) -> Result<GlobalSolution> {
    let mesh = model.discretize()?;
    solve_mesh(model, &mesh)
}

pub fn solve_mesh(model: &FrameModel, mesh: &Mesh) -> Result<GlobalSolution> {
    let map = &mesh.dofs;
    let mut constrained = vec![false; map.total];
    let joint_index: std::collections::HashMap<usize, usize> =
        model.nodes.iter().enumerate().map(|(i, j)| (j.id, i)).collect();
    for s in &model.supports {
        let node = mesh.joint_nodes[joint_index[&s.node]];
        let d = map.node_dofs[node];
        for (k, fixed) in [s.ux, s.uy, s.theta].into_iter().enumerate() {
            if fixed {
                constrained[d[k]] = true;
            }
        }
    }
    let mut free_index = vec![usize::MAX; map.total];
    let mut free_dofs = Vec::new();
    for (dof, &c) in constrained.iter().enumerate() {
        if !c {
            free_index[dof] = free_dofs.len();
            free_dofs.push(dof);
        }
    }

    // internal moments are condensed element by element; the global system
    // couples nodal DOFs only
    let mut nodal_index = vec![usize::MAX; map.total];
    let mut nodal_free = Vec::new();
    for node in &map.node_dofs {
        for &d in node {
            if free_index[d] != usize::MAX {
                nodal_index[d] = nodal_free.len();
                nodal_free.push(d);
            }
        }
    }
    let nnodal = nodal_free.len();

    let mut systems = Vec::with_capacity(mesh.elements.len());
    let mut first: Vec<usize> = (0..nnodal).collect();
    for (e, el) in mesh.elements.iter().enumerate() {
        let proj = build_projection(&el.spec)?;
        let (_, fl) = local_element_system(&proj, &el.load)?;
        let dofs = map.element_dofs(e, el.start, el.end);
        let condensed = CondensedFrame::new(&el.spec, &fl, el.cos, el.sin)?;
        let free: Vec<usize> = dofs[..6]
            .iter()
            .map(|&d| nodal_index[d])
            .filter(|&i| i != usize::MAX)
            .collect();
        if let Some(&lo) = free.iter().min() {
            for &i in &free {
                first[i] = first[i].min(lo);
            }
        }
        systems.push(ElementSystem { proj, dofs, condensed });
    }

    let mut k = SkylineMatrix::new(first);
    for sys in &systems {
        let kc = &sys.condensed.stiffness;
        for a in 0..6 {
            let ia = nodal_index[sys.dofs[a]];
            if ia == usize::MAX {
                continue;
            }
            for b in 0..6 {
                let ib = nodal_index[sys.dofs[b]];
                if ib != usize::MAX && ib <= ia {
                    k.add(ia, ib, kc[(a, b)]);
                }
            }
        }
    }
    let mut f = vec![0.0; nnodal];
    for sys in &systems {
        for a in 0..6 {
            let ia = nodal_index[sys.dofs[a]];
            if ia != usize::MAX {
                f[ia] += sys.condensed.load[a];
            }
        }
    }
    for load in &model.loads.nodal {
        let node = mesh.joint_nodes[joint_index[&load.node]];
        for (c, v) in map.node_dofs[node].iter().zip([load.fx, load.fy, load.moment]) {
            if nodal_index[*c] != usize::MAX {
                f[nodal_index[*c]] += v;
            }
        }
    }
    let scale: Vec<f64> = (0..nnodal)
        .map(|i| {
            let d = k.diagonal(i);
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    k.scale_symmetric(&scale);
    let chol = k
        .cholesky(1e-11)
        .map_err(|e| VemError::Mechanism(describe_dof(mesh, nodal_free[e.row])))?;

    let solve = |rhs: &[f64]| -> Vec<f64> {
        let y: Vec<f64> = rhs.iter().zip(&scale).map(|(r, s)| r * s).collect();
        chol.solve(&y).iter().zip(&scale).map(|(v, s)| v * s).collect()
    };
    let mut uc = solve(&f);
    let mut residual = nodal_residual(&systems, &uc, &f, &nodal_index);
    for _ in 0..REFINEMENT_STEPS {
        let du = solve(&residual);
        uc.iter_mut().zip(&du).for_each(|(u, d)| *u += d);
        residual = nodal_residual(&systems, &uc, &f, &nodal_index);
    }
    let mut dofs = vec![0.0; map.total];
    for (i, &d) in nodal_free.iter().enumerate() {
        dofs[d] = uc[i];
    }
    for sys in &systems {
        let nodal: Vec<f64> = sys.dofs[..6].iter().map(|&d| dofs[d]).collect();
        let m = sys.condensed.recover(&nodal);
        for (k, &d) in sys.dofs[6..].iter().enumerate() {
            dofs[d] = m[k];
        }
    }
    let residual_norm = residual.iter().map(|v| v * v).sum::<f64>().sqrt();
    let load_norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();

    let node_displacements = map
        .node_dofs
        .iter()
        .map(|d| [dofs[d[0]], dofs[d[1]], dofs[d[2]]])
        .collect();
    let elements = systems
        .iter()
        .zip(&mesh.elements)
        .map(|(sys, el)| {
            let (proj, edofs) = (&sys.proj, &sys.dofs);
            let global = DVector::from_iterator(edofs.len(), edofs.iter().map(|&d| dofs[d]));
            let local = rotation_from_direction(global.len(), el.cos, el.sin) * global;
            let bending: Vec<f64> = [1usize, 2, 4, 5]
                .into_iter()
                .chain(6..local.len())
                .map(|i| local[i])
                .collect();
            let coefficients = proj
                .coefficients(&DVector::from_vec(bending.clone()))
                .iter()
                .copied()
                .collect();
            ElementSolution {
                length: el.spec.length,
                axial: [local[0], local[3]],
                bending,
                coefficients,
            }
        })
        .collect();
    Ok(GlobalSolution {
        dofs,
        node_displacements,
        elements,
        residual_norm,
        load_norm,
    })
}

struct ElementSystem {
    proj: ProjectionSystem,
    dofs: Vec<usize>,
    condensed: CondensedFrame,
}

/// Condensed element in global axes.
struct CondensedFrame {
    /// `6 x 6` nodal stiffness `[ux1, uy1, th1, ux2, uy2, th2]`.
    stiffness: DMatrix<f64>,
    load: DVector<f64>,
    bending: CondensedBending,
    /// Moments under the element load with the nodes held fixed.
    fixed_moments: DVector<f64>,
    cos: f64,
    sin: f64,
}

impl CondensedFrame {
    fn new(spec: &ElementSpec, f_local: &DVector<f64>, cos: f64, sin: f64) -> Result<Self> {
        let bending = CondensedBending::new(spec)?;
        let ka = axial_stiffness(spec)?;
        let slots = [1usize, 2, 4, 5];
        let mut k = DMatrix::zeros(6, 6);
        for (a, &i) in slots.iter().enumerate() {
            for (b, &j) in slots.iter().enumerate() {
                k[(i, j)] = bending.stiffness[(a, b)];
            }
        }
        for (a, &i) in [0usize, 3].iter().enumerate() {
            for (b, &j) in [0usize, 3].iter().enumerate() {
                k[(i, j)] = ka[(a, b)];
            }
        }
        let fb = DVector::from_iterator(
            4 + spec.moment_count(),
            slots.iter().map(|&i| f_local[i]).chain(f_local.iter().skip(6).copied()),
        );
        let fc = bending.condense_load(&fb);
        let mut f = DVector::zeros(6);
        f[0] = f_local[0];
        f[3] = f_local[3];
        for (a, &i) in slots.iter().enumerate() {
            f[i] = fc[a];
        }
        let fixed_moments = bending.solve_moments(&fb.rows(4, spec.moment_count()).into_owned());
        let (stiffness, load) = transform_with(&k, &f, cos, sin);
        Ok(Self {
            stiffness,
            load,
            bending,
            fixed_moments,
            cos,
            sin,
        })
    }

    fn recover(&self, nodal_global: &[f64]) -> DVector<f64> {
        let t = rotation_from_direction(6, self.cos, self.sin);
        let local = t * DVector::from_column_slice(nodal_global);
        let uc = DVector::from_iterator(4, [1usize, 2, 4, 5].iter().map(|&i| local[i]));
        &self.fixed_moments - &self.bending.recovery * uc
    }
}

/// `f - K u` of the condensed nodal system over the free nodal DOFs,
/// accumulated per element in double-double arithmetic.
fn nodal_residual(systems: &[ElementSystem], u: &[f64], f: &[f64], nodal_index: &[usize]) -> Vec<f64> {
    let mut hi = f.to_vec();
    let mut lo = vec![0.0; f.len()];
    for sys in systems {
        let k = &sys.condensed.stiffness;
        for (a, &da) in sys.dofs[..6].iter().enumerate() {
            let ia = nodal_index[da];
            if ia == usize::MAX {
                continue;
            }
            for (b, &db) in sys.dofs[..6].iter().enumerate() {
                let ib = nodal_index[db];
                if ib == usize::MAX {
                    continue;
                }
                let p = -k[(a, b)] * u[ib];
                let pe = (-k[(a, b)]).mul_add(u[ib], -p);
                let s = hi[ia] + p;
                let bb = s - hi[ia];
                let se = (hi[ia] - (s - bb)) + (p - bb);
                hi[ia] = s;
                lo[ia] += se + pe;
            }
        }
    }
    hi.iter().zip(&lo).map(|(h, l)| h + l).collect()
}

fn describe_dof(mesh: &Mesh, dof: usize) -> String {
    const NAMES: [&str; 3] = ["ux", "uy", "theta"];
    for (node, d) in mesh.dofs.node_dofs.iter().enumerate() {
        if let Some(k) = d.iter().position(|&x| x == dof) {
            let n = &mesh.nodes[node];
            return format!("{} of node {node} at ({}, {})", NAMES[k], n.x, n.y);
        }
    }
    for (e, m) in mesh.dofs.element_moments.iter().enumerate() {
        if let Some(k) = m.iter().position(|&x| x == dof) {
            return format!("internal moment m_{k} of element {e}");
        }
    }
    format!("dof {dof}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::element::{LoadSpec, MaterialParams};
    use crate::frame::{build_portico, FrameLoads, Joint, Member, NodalLoad, Support};
    use std::f64::consts::PI;

    fn unit() -> MaterialParams {
        MaterialParams::new(1.0, 1.0, 1.0).unwrap()
    }

    pub(crate) fn cantilever(order: usize, elements: usize, tip: f64) -> FrameModel {
        FrameModel {
            schema_version: 1,
            nodes: vec![Joint { id: 0, x: 0.0, y: 0.0 }, Joint { id: 1, x: 1.0, y: 0.0 }],
            members: vec![Member {
                start: 0,
                end: 1,
                material: unit(),
                elements,
                order,
            }],
            supports: vec![Support::fixed(0)],
            loads: FrameLoads {
                distributed: vec![],
                nodal: vec![NodalLoad {
                    node: 1,
                    fx: 0.0,
                    fy: tip,
                    moment: 0.0,
                }],
            },
        }
    }

    #[test]
    fn cantilever_tip() {
        for order in 3..=5 {
            let sol = assemble_and_solve(&cantilever(order, 1, 1.0)).unwrap();
            let tip = sol.node_displacements[1];
            assert!((tip[1] - 1.0 / 3.0).abs() < 1e-12, "order {order}: {tip:?}");
            assert!((tip[2] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_load_zero_solution() {
        let m = MaterialParams::new(200e9, 1e-5, 1e-3).unwrap();
        let model = build_portico(2.0, 4, 4, m, &LoadSpec::default()).unwrap();
        let sol = assemble_and_solve(&model).unwrap();
        assert!(sol.dofs.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn transform_identity_and_composition() {
        let proj = build_projection(&crate::element::ElementSpec::new(5, 0.8, unit()).unwrap()).unwrap();
        let (k, f) = local_element_system(&proj, &LoadSpec::uniform(2.0)).unwrap();
        let (k0, f0) = transform_element(&k, &f, 0.0);
        assert!((&k0 - &k).abs().max() < 1e-15 && (&f0 - &f).abs().max() < 1e-15);

        let (k1, f1) = transform_element(&k, &f, PI / 2.0);
        let (k2, f2) = transform_element(&k1, &f1, PI / 2.0);
        let (kp, fp) = transform_element(&k, &f, PI);
        assert!((&k2 - &kp).abs().max() < 1e-10 * k.abs().max());
        assert!((&f2 - &fp).abs().max() < 1e-12);

        let eig = k1.symmetric_eigen().eigenvalues;
        assert!(eig.min() > -1e-10 * eig.max());
    }

    #[test]
    fn unsupported_frame_reports_mechanism() {
        let mut model = cantilever(4, 2, 1.0);
        model.supports.clear();
        let err = assemble_and_solve(&model).unwrap_err();
        assert!(matches!(err, VemError::Mechanism(_)), "{err}");
    }

    #[test]
    fn portico_residual_small() {
        let m = MaterialParams::new(200e9, 1e-5, 1e-3).unwrap();
        for (n, order) in [(24, 4), (96, 5)] {
            let model = build_portico(2.0, n, order, m, &LoadSpec::uniform(-1e4)).unwrap();
            let sol = assemble_and_solve(&model).unwrap();
            assert!(
                sol.residual_norm <= 1e-9 * sol.load_norm,
                "{} {}",
                sol.residual_norm,
                sol.load_norm
            );
            // symmetric structure under symmetric load, up to conditioning
            let mesh = model.discretize().unwrap();
            let left = sol.node_displacements[mesh.joint_nodes[1]];
            let right = sol.node_displacements[mesh.joint_nodes[2]];
            let scale = left.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!((left[1] - right[1]).abs() < 1e-8 * scale);
            assert!((left[0] + right[0]).abs() < 1e-8 * scale, "{left:?} {right:?}");
            assert!((left[2] + right[2]).abs() < 1e-8 * scale);
        }
    }
}
