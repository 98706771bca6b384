//! Monotone Sobolev maps between planar domains, discretized as piecewise
//! linear maps on triangle meshes: energies, a p-harmonic solver, the cell
//! replacement chain that produces homeomorphic approximations, and checks.

// `!(x > 0.0)` is used on purpose so NaN falls on the failing side.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod functionals;
pub mod geometry;
pub mod homeomorphize;
pub mod oracle;
pub mod psolver;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use geometry::{DiscreteMap, PolygonalDomain, TriangleMesh, Vec2};
