//! Planar meshes, polygonal target domains and piecewise-linear maps.

mod map;
mod mesh;
mod polygon;
mod vec2;

pub use map::DiscreteMap;
pub use mesh::{build_annulus_mesh, build_rect_mesh, build_rect_mesh_on, MeshData, TriangleMesh};
pub use polygon::{point_in_loop, PolygonData, PolygonalDomain};
pub use vec2::{orient, point_segment_distance, segments_cross, Aabb, Vec2};
