use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::map::DiscreteMap;
use super::mesh::polyline_signed_area;
use super::vec2::{point_segment_distance, segments_cross, Aabb, Vec2};
use crate::error::{Error, Result};

/// Polygon with holes. The outer loop runs counterclockwise, holes clockwise;
/// loops are stored without repeating the first point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolygonData", into = "PolygonData")]
pub struct PolygonalDomain {
    outer: Vec<Vec2>,
    holes: Vec<Vec<Vec2>>,
    bbox: Aabb,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolygonData {
    pub outer_loop: Vec<Vec2>,
    #[serde(default)]
    pub holes: Vec<Vec<Vec2>>,
}

impl TryFrom<PolygonData> for PolygonalDomain {
    type Error = Error;
    fn try_from(d: PolygonData) -> Result<Self> {
        PolygonalDomain::new(d.outer_loop, d.holes)
    }
}

impl From<PolygonalDomain> for PolygonData {
    fn from(p: PolygonalDomain) -> Self {
        PolygonData {
            outer_loop: p.outer,
            holes: p.holes,
        }
    }
}

impl PolygonalDomain {
    /// Validates the loops and normalizes their orientation.
    pub fn new(mut outer: Vec<Vec2>, mut holes: Vec<Vec<Vec2>>) -> Result<Self> {
        for lp in std::iter::once(&mut outer).chain(holes.iter_mut()) {
            if lp.len() >= 2 && lp.first() == lp.last() {
                lp.pop();
            }
            if lp.len() < 3 {
                return Err(Error::invalid("polygon loop needs at least three points"));
            }
            if lp.iter().any(|p| !p.is_finite()) {
                return Err(Error::invalid("polygon loop has a non-finite point"));
            }
        }
        if polyline_signed_area(outer.iter().copied()) < 0.0 {
            outer.reverse();
        }
        for h in &mut holes {
            if polyline_signed_area(h.iter().copied()) > 0.0 {
                h.reverse();
            }
        }
        let bbox = Aabb::from_points(outer.iter().copied());
        let dom = PolygonalDomain { outer, holes, bbox };
        dom.validate()?;
        Ok(dom)
    }

    fn validate(&self) -> Result<()> {
        let eps = 1e-14 * self.scale() * self.scale();
        let loops: Vec<&[Vec2]> = self.loops().collect();
        for (li, a) in loops.iter().enumerate() {
            for (lj, b) in loops.iter().enumerate().skip(li) {
                for i in 0..a.len() {
                    let (p0, p1) = (a[i], a[(i + 1) % a.len()]);
                    for j in 0..b.len() {
                        if li == lj && (j <= i || j == i + 1 || (i == 0 && j == a.len() - 1)) {
                            continue;
                        }
                        if segments_cross(p0, p1, b[j], b[(j + 1) % b.len()], eps) {
                            return Err(Error::invalid(format!(
                                "polygon loops {li} and {lj} intersect (segments {i} and {j})"
                            )));
                        }
                    }
                }
            }
        }
        for (k, h) in self.holes.iter().enumerate() {
            if !point_in_loop(h[0], &self.outer) {
                return Err(Error::invalid(format!("hole {k} is not inside the outer loop")));
            }
            for (m, g) in self.holes.iter().enumerate() {
                if m != k && point_in_loop(h[0], g) {
                    return Err(Error::invalid(format!("hole {k} lies inside hole {m}")));
                }
            }
        }
        Ok(())
    }

    pub fn rectangle(min: Vec2, max: Vec2) -> Result<Self> {
        if !(max.x > min.x && max.y > min.y) {
            return Err(Error::invalid("rectangle corners must be ordered"));
        }
        PolygonalDomain::new(
            vec![min, Vec2::new(max.x, min.y), max, Vec2::new(min.x, max.y)],
            Vec::new(),
        )
    }

    /// Annulus centered at the origin. The outer circle is circumscribed and
    /// the inner one inscribed, so the exact annulus lies in the closed polygon.
    pub fn annulus(inner: f64, outer: f64, segments: usize) -> Result<Self> {
        if !(inner > 0.0 && outer > inner) {
            return Err(Error::invalid(format!(
                "annulus radii must satisfy 0 < inner < outer, got {inner} and {outer}"
            )));
        }
        if segments < 3 {
            return Err(Error::invalid("annulus polygon needs at least three segments"));
        }
        let n = segments;
        let ro = outer / (PI / n as f64).cos();
        let ring = |r: f64| -> Vec<Vec2> {
            (0..n).map(|j| Vec2::from_polar(r, 2.0 * PI * j as f64 / n as f64)).collect()
        };
        PolygonalDomain::new(ring(ro), vec![ring(inner)])
    }

    /// Polygon traced by the images of the mesh boundary loops. The loop
    /// enclosing the largest area becomes the outer loop.
    pub fn from_map_boundary(map: &DiscreteMap) -> Result<Self> {
        let mesh = map.mesh();
        let mut loops: Vec<Vec<Vec2>> = mesh
            .boundary_loops()
            .iter()
            .map(|lp| lp.iter().map(|&v| map.images()[v]).collect())
            .collect();
        let outer_idx = (0..loops.len())
            .max_by(|&a, &b| {
                let fa = polyline_signed_area(loops[a].iter().copied()).abs();
                let fb = polyline_signed_area(loops[b].iter().copied()).abs();
                fa.total_cmp(&fb)
            })
            .ok_or_else(|| Error::invalid("mesh has no boundary"))?;
        let outer = loops.swap_remove(outer_idx);
        PolygonalDomain::new(outer, loops)
    }

    pub fn outer_loop(&self) -> &[Vec2] {
        &self.outer
    }

    pub fn holes(&self) -> &[Vec<Vec2>] {
        &self.holes
    }

    /// Outer loop followed by the holes.
    pub fn loops(&self) -> impl Iterator<Item = &[Vec2]> {
        std::iter::once(self.outer.as_slice()).chain(self.holes.iter().map(|h| h.as_slice()))
    }

    pub fn bounding_box(&self) -> Aabb {
        self.bbox
    }

    pub fn scale(&self) -> f64 {
        self.bbox.diagonal().max(f64::MIN_POSITIVE)
    }

    /// Largest distance between two outer-loop vertices.
    pub fn diameter(&self) -> f64 {
        let o = &self.outer;
        let mut d: f64 = 0.0;
        for i in 0..o.len() {
            for j in i + 1..o.len() {
                d = d.max(o[i].distance(o[j]));
            }
        }
        d
    }

    pub fn area(&self) -> f64 {
        self.loops().map(|l| polyline_signed_area(l.iter().copied())).sum()
    }

    /// Closed containment: points within `1e-12 * scale` of the boundary count as inside.
    pub fn contains(&self, p: Vec2) -> bool {
        if self.distance_to_boundary(p) <= 1e-12 * self.scale() {
            return true;
        }
        self.contains_open(p)
    }

    /// Even-odd containment without boundary tolerance.
    pub fn contains_open(&self, p: Vec2) -> bool {
        self.loops().filter(|l| point_in_loop(p, l)).count() % 2 == 1
    }

    pub fn distance_to_boundary(&self, p: Vec2) -> f64 {
        self.loops()
            .flat_map(|l| (0..l.len()).map(move |i| (l[i], l[(i + 1) % l.len()])))
            .map(|(a, b)| point_segment_distance(p, a, b).0)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Crossing-number test against one closed loop.
pub fn point_in_loop(p: Vec2, lp: &[Vec2]) -> bool {
    let mut inside = false;
    let n = lp.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (lp[i], lp[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}
