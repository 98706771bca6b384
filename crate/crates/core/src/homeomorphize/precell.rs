//! Discrete pre-cells: the source triangles a map sends into a cell.

use serde::{Deserialize, Serialize};

use super::cover::{Cell, CellKind};
use crate::geometry::{point_segment_distance, DiscreteMap, PolygonalDomain, Vec2};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreCell {
    /// Edge-connected triangle set, ascending.
    pub triangles: Vec<usize>,
    /// Outer boundary cycle, counterclockwise in the source.
    pub boundary_loop: Vec<usize>,
    /// Every vertex on a boundary cycle of the triangle set, ascending.
    pub boundary_vertices: Vec<usize>,
    pub interior_vertices: Vec<usize>,
    pub kind: CellKind,
    /// Triangles added to close holes that do not belong to the source boundary.
    pub filled_triangles: usize,
}

impl PreCell {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }
}

/// Membership of an image point in the closed cell. Boundary cells also
/// accept points outside the target within one half-width of the external
/// face whose nearest face point is not an end of the face, which extends
/// the cell past the target boundary without widening it sideways.
pub fn image_in_cell(w: Vec2, cell: &Cell, target: &PolygonalDomain) -> bool {
    let tol = 1e-12 * target.scale();
    if cell.square.contains(w, tol) {
        return true;
    }
    match (&cell.kind, &cell.external_face) {
        (CellKind::Boundary, Some(face)) if face.len() >= 2 && !target.contains(w) => {
            let reach = cell.square.half_width;
            let last = face.len() - 2;
            let (mut best, mut at_end) = (f64::INFINITY, false);
            for (i, s) in face.windows(2).enumerate() {
                let (d, t) = point_segment_distance(w, s[0], s[1]);
                if d < best {
                    best = d;
                    at_end = (i == 0 && t <= 0.0) || (i == last && t >= 1.0);
                }
            }
            best <= reach && !at_end
        }
        _ => false,
    }
}

/// Triangles whose three vertex images lie in the (extended) cell, reduced
/// to the largest edge-connected component (ties go to the component with
/// the lowest triangle index), with enclosed non-boundary holes filled.
pub fn compute_precell(map: &DiscreteMap, cell: &Cell, target: &PolygonalDomain) -> PreCell {
    let mesh = map.mesh();
    let inside: Vec<bool> = map.images().iter().map(|&w| image_in_cell(w, cell, target)).collect();
    let flags: Vec<bool> = mesh
        .triangles()
        .iter()
        .map(|t| t.iter().all(|&v| inside[v]))
        .collect();
    let comps = mesh.components(&flags);
    let Some(best) = comps.iter().enumerate().max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(&a.0))) else {
        return PreCell {
            triangles: Vec::new(),
            boundary_loop: Vec::new(),
            boundary_vertices: Vec::new(),
            interior_vertices: Vec::new(),
            kind: cell.kind,
            filled_triangles: 0,
        };
    };
    let mut region = vec![false; mesh.num_triangles()];
    for &t in best.1 {
        region[t] = true;
    }

    // Complement components without a source-boundary edge are enclosed by
    // the region; absorbing them keeps the pre-cell free of spurious holes.
    let complement: Vec<bool> = region.iter().map(|r| !r).collect();
    let mut filled = 0;
    for comp in mesh.components(&complement) {
        let touches_boundary = comp
            .iter()
            .any(|&t| mesh.triangle_neighbors(t).iter().any(|n| n.is_none()));
        if !touches_boundary {
            filled += comp.len();
            for t in comp {
                region[t] = true;
            }
        }
    }

    let triangles: Vec<usize> = (0..mesh.num_triangles()).filter(|&t| region[t]).collect();
    let loops = mesh.region_boundary_loops(&region);
    let outer = loops
        .iter()
        .max_by(|a, b| mesh.loop_signed_area(a).total_cmp(&mesh.loop_signed_area(b)))
        .cloned()
        .unwrap_or_default();
    let mut on_loop = vec![false; mesh.num_vertices()];
    for lp in &loops {
        for &v in lp {
            on_loop[v] = true;
        }
    }
    let verts = mesh.region_vertices(&triangles);
    let (boundary_vertices, interior_vertices) = verts.into_iter().partition(|&v| on_loop[v]);
    PreCell {
        triangles,
        boundary_loop: outer,
        boundary_vertices,
        interior_vertices,
        kind: cell.kind,
        filled_triangles: filled,
    }
}
