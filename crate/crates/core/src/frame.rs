//! Planar frame description, discretization and DOF numbering.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::element::{ElementSpec, LoadSpec, MaterialParams};
use crate::error::{Result, VemError};

pub const FRAME_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub id: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub start: usize,
    pub end: usize,
    pub material: MaterialParams,
    /// Number of equal elements the member is split into.
    pub elements: usize,
    /// Polynomial order of every element on the member.
    pub order: usize,
}

/// Constrained components at a joint; `true` means fixed to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub node: usize,
    pub ux: bool,
    pub uy: bool,
    pub theta: bool,
}

impl Support {
    pub fn pinned(node: usize) -> Self {
        Self {
            node,
            ux: true,
            uy: true,
            theta: false,
        }
    }

    pub fn fixed(node: usize) -> Self {
        Self {
            node,
            ux: true,
            uy: true,
            theta: true,
        }
    }

    pub fn roller_y(node: usize) -> Self {
        Self {
            node,
            ux: false,
            uy: true,
            theta: false,
        }
    }
}

/// Point load at a joint in global components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodalLoad {
    pub node: usize,
    #[serde(default)]
    pub fx: f64,
    #[serde(default)]
    pub fy: f64,
    #[serde(default)]
    pub moment: f64,
}

/// Transverse polynomial load along a member, in the member's local
/// coordinate `s in [0, L]` and its local `y` direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberLoad {
    pub member: usize,
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameLoads {
    #[serde(default)]
    pub distributed: Vec<MemberLoad>,
    #[serde(default)]
    pub nodal: Vec<NodalLoad>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameModel {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub nodes: Vec<Joint>,
    pub members: Vec<Member>,
    pub supports: Vec<Support>,
    #[serde(default)]
    pub loads: FrameLoads,
}

fn default_schema() -> u32 {
    FRAME_SCHEMA_VERSION
}

/// Rectangular portico: left column, beam, right column, pinned at both
/// column bases. Every member has length `beam_length` and `elems_per_edge`
/// elements. `load` is applied to the beam in its local frame (local `y`
/// points up), so a negative uniform coefficient pushes the beam down.
pub fn build_portico(
    beam_length: f64,
    elems_per_edge: usize,
    order: usize,
    material: MaterialParams,
    load: &LoadSpec,
) -> Result<FrameModel> {
    if elems_per_edge == 0 {
        return Err(VemError::InvalidModel("elems_per_edge must be >= 1".into()));
    }
    if order < 3 {
        return Err(VemError::InvalidOrder(order));
    }
    let l = beam_length;
    let nodes = vec![
        Joint { id: 0, x: 0.0, y: 0.0 },
        Joint { id: 1, x: 0.0, y: l },
        Joint { id: 2, x: l, y: l },
        Joint { id: 3, x: l, y: 0.0 },
    ];
    let member = |start, end| Member {
        start,
        end,
        material,
        elements: elems_per_edge,
        order,
    };
    let mut loads = FrameLoads::default();
    if load.degree().is_some() {
        loads.distributed.push(MemberLoad {
            member: 1,
            coefficients: load.distributed.clone(),
        });
    }
    let model = FrameModel {
        schema_version: FRAME_SCHEMA_VERSION,
        nodes,
        members: vec![member(0, 1), member(1, 2), member(2, 3)],
        supports: vec![Support::pinned(0), Support::pinned(3)],
        loads,
    };
    model.validate()?;
    Ok(model)
}

/// Discretized node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshNode {
    pub x: f64,
    pub y: f64,
    /// Index into `FrameModel::nodes` when the node is a joint.
    pub joint: Option<usize>,
}

/// Discretized element with its local geometry and load.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshElement {
    pub member: usize,
    pub index_in_member: usize,
    pub start: usize,
    pub end: usize,
    pub spec: ElementSpec,
    pub cos: f64,
    pub sin: f64,
    /// Distance of the element start from the member start.
    pub offset: f64,
    /// Distributed load re-expanded about the element start.
    pub load: LoadSpec,
}

impl MeshElement {
    pub fn angle(&self) -> f64 {
        self.sin.atan2(self.cos)
    }

    /// Global coordinates of the point at local abscissa `x`.
    pub fn point(&self, nodes: &[MeshNode], x: f64) -> (f64, f64) {
        let a = nodes[self.start];
        (a.x + self.cos * x, a.y + self.sin * x)
    }
}

/// Global DOF numbering. Nodal triples `(ux, uy, theta)` and element moments
/// are numbered in element traversal order so the stiffness profile stays
/// narrow along member chains.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub node_dofs: Vec<[usize; 3]>,
    pub element_moments: Vec<Vec<usize>>,
    pub total: usize,
}

impl DofMap {
    /// Global indices of an element in local layout
    /// `[u1, w1, th1, u2, w2, th2, m_0, ...]` (nodal slots are global
    /// components before rotation).
    pub fn element_dofs(&self, element: usize, start: usize, end: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(6 + self.element_moments[element].len());
        out.extend_from_slice(&self.node_dofs[start]);
        out.extend_from_slice(&self.node_dofs[end]);
        out.extend_from_slice(&self.element_moments[element]);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<MeshNode>,
    pub elements: Vec<MeshElement>,
    /// Mesh node index of each joint, aligned with `FrameModel::nodes`.
    pub joint_nodes: Vec<usize>,
    pub dofs: DofMap,
}

impl Mesh {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    pub fn moment_dofs(&self) -> usize {
        self.dofs.element_moments.iter().map(Vec::len).sum()
    }
}

impl FrameModel {
    fn joint_index(&self) -> HashMap<usize, usize> {
        self.nodes.iter().enumerate().map(|(i, j)| (j.id, i)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let index = self.joint_index();
        if index.len() != self.nodes.len() {
            return Err(VemError::InvalidModel("duplicate joint ids".into()));
        }
        let lookup = |id: usize, what: &str| {
            index
                .get(&id)
                .copied()
                .ok_or_else(|| VemError::InvalidModel(format!("{what} references unknown node {id}")))
        };
        for (m, member) in self.members.iter().enumerate() {
            let a = self.nodes[lookup(member.start, "member")?];
            let b = self.nodes[lookup(member.end, "member")?];
            let length = (b.x - a.x).hypot(b.y - a.y);
            if !(length > 0.0 && length.is_finite()) {
                return Err(VemError::InvalidModel(format!("member {m} has zero length")));
            }
            if member.elements == 0 {
                return Err(VemError::InvalidModel(format!("member {m} has no elements")));
            }
            if member.order < 3 {
                return Err(VemError::InvalidOrder(member.order));
            }
            member.material.validate()?;
        }
        for s in &self.supports {
            lookup(s.node, "support")?;
        }
        for l in &self.loads.nodal {
            lookup(l.node, "nodal load")?;
        }
        for l in &self.loads.distributed {
            if l.member >= self.members.len() {
                return Err(VemError::InvalidModel(format!(
                    "distributed load references unknown member {}",
                    l.member
                )));
            }
        }
        Ok(())
    }

    pub fn member_length(&self, member: usize) -> f64 {
        let index = self.joint_index();
        let m = &self.members[member];
        let a = self.nodes[index[&m.start]];
        let b = self.nodes[index[&m.end]];
        (b.x - a.x).hypot(b.y - a.y)
    }

    /// Splits members into elements and numbers the DOFs.
    pub fn discretize(&self) -> Result<Mesh> {
        self.validate()?;
        let index = self.joint_index();
        let mut nodes: Vec<MeshNode> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, j)| MeshNode {
                x: j.x,
                y: j.y,
                joint: Some(i),
            })
            .collect();
        let joint_nodes: Vec<usize> = (0..self.nodes.len()).collect();
        let mut elements = Vec::new();
        for (m, member) in self.members.iter().enumerate() {
            let a = index[&member.start];
            let b = index[&member.end];
            let (ax, ay) = (self.nodes[a].x, self.nodes[a].y);
            let (dx, dy) = (self.nodes[b].x - ax, self.nodes[b].y - ay);
            let length = dx.hypot(dy);
            let (cos, sin) = (dx / length, dy / length);
            let h = length / member.elements as f64;
            let base =
                LoadSpec {
                    distributed: self.loads.distributed.iter().filter(|l| l.member == m).fold(
                        Vec::new(),
                        |mut acc, l| {
                            if acc.len() < l.coefficients.len() {
                                acc.resize(l.coefficients.len(), 0.0);
                            }
                            for (s, c) in acc.iter_mut().zip(&l.coefficients) {
                                *s += c;
                            }
                            acc
                        },
                    ),
                    nodal: [0.0; 4],
                };
            let mut prev = a;
            for e in 0..member.elements {
                let next = if e + 1 == member.elements {
                    b
                } else {
                    let t = (e + 1) as f64 / member.elements as f64;
                    nodes.push(MeshNode {
                        x: ax + t * dx,
                        y: ay + t * dy,
                        joint: None,
                    });
                    nodes.len() - 1
                };
                let offset = e as f64 * h;
                elements.push(MeshElement {
                    member: m,
                    index_in_member: e,
                    start: prev,
                    end: next,
                    spec: ElementSpec::new(member.order, h, member.material)?,
                    cos,
                    sin,
                    offset,
                    load: base.shifted(offset),
                });
                prev = next;
            }
        }
        let dofs = number_dofs(nodes.len(), &elements);
        Ok(Mesh {
            nodes,
            elements,
            joint_nodes,
            dofs,
        })
    }
}

fn number_dofs(node_count: usize, elements: &[MeshElement]) -> DofMap {
    const UNSET: usize = usize::MAX;
    let mut node_dofs = vec![[UNSET; 3]; node_count];
    let mut element_moments = Vec::with_capacity(elements.len());
    let mut next = 0;
    let assign = |slot: &mut [usize; 3], next: &mut usize| {
        if slot[0] == UNSET {
            *slot = [*next, *next + 1, *next + 2];
            *next += 3;
        }
    };
    for el in elements {
        assign(&mut node_dofs[el.start], &mut next);
        let moments: Vec<usize> = (next..next + el.spec.moment_count()).collect();
        next += moments.len();
        element_moments.push(moments);
        assign(&mut node_dofs[el.end], &mut next);
    }
    for slot in node_dofs.iter_mut() {
        assign(slot, &mut next);
    }
    DofMap {
        node_dofs,
        element_moments,
        total: next,
    }
}
