//! Virtual element beams of arbitrary order and planar frames built from them.
//!
//! * [`element`]: projection matrices, stiffness and load of a single element.
//! * [`frame`]: frame description, portico builder, discretization and DOF map.
//! * [`assembly`]: global assembly, support elimination and solve.
//! * [`field`]: member-wise displacement fields and the H¹ error between them.

pub mod assembly;
pub mod element;
pub mod error;
pub mod field;
pub mod frame;
pub mod quadrature;
pub mod skyline;

pub use assembly::{assemble_and_solve, transform_element, ElementSolution, GlobalSolution};
pub use element::{
    axial_stiffness, build_g, build_projection, build_r, element_load, element_stiffness, monomial_integral,
    CondensedBending, ElementSpec, LoadSpec, MaterialParams, ProjectionSystem,
};
pub use error::{Result, VemError};
pub use field::{h1_error, h1_error_with_points, ErrorReport, LocalSample, MemberField};
pub use frame::{build_portico, DofMap, FrameModel, Mesh};
