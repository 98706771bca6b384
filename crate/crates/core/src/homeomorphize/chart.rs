//! Radial straightening chart for non-convex cell regions.
//!
//! A boundary cell whose external face bulges into the cell has a non-convex
//! region, and a p-harmonic replacement onto it can fold across the face.
//! The chart rescales rays from a star center so the region's boundary lands
//! on its convex hull; the replacement is solved there and mapped back. Along
//! each ray the map is a linear stretch, so its Jacobian is the positive
//! square of the stretch factor.

use crate::geometry::{orient, Vec2};

#[derive(Clone, Debug)]
pub struct RadialChart {
    center: Vec2,
    region: Vec<Vec2>,
    hull: Vec<Vec2>,
}

/// Counterclockwise convex hull, collinear points dropped.
pub fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Vec2> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vec2>> = if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && orient(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn is_convex(poly: &[Vec2], tol: f64) -> bool {
    let n = poly.len();
    (0..n).all(|i| orient(poly[i], poly[(i + 1) % n], poly[(i + 2) % n]) >= -tol)
}

/// Distance from `c` along unit `dir` to the farthest crossing of the polygon boundary.
fn ray_extent(poly: &[Vec2], c: Vec2, dir: Vec2) -> f64 {
    let n = poly.len();
    let mut best: f64 = 0.0;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let e = b - a;
        let denom = dir.cross(e);
        if denom.abs() < 1e-300 {
            continue;
        }
        let ac = a - c;
        let t = ac.cross(e) / denom;
        let s = ac.cross(dir) / denom;
        if t > 0.0 && (-1e-12..=1.0 + 1e-12).contains(&s) {
            best = best.max(t);
        }
    }
    best
}

impl RadialChart {
    /// `None` when the region is already convex or has no usable star center.
    pub fn for_region(region: &[Vec2], scale: f64) -> Option<Self> {
        if region.len() < 3 || is_convex(region, 1e-12 * scale * scale) {
            return None;
        }
        let hull = convex_hull(region);
        let bb = crate::geometry::Aabb::from_points(region.iter().copied());
        // Star center: lattice point with the largest clearance from every edge line.
        let n = region.len();
        let clearance = |c: Vec2| {
            (0..n)
                .map(|i| {
                    let (a, b) = (region[i], region[(i + 1) % n]);
                    orient(a, b, c) / a.distance(b).max(1e-300)
                })
                .fold(f64::INFINITY, f64::min)
        };
        let k = 24;
        let mut best: Option<(Vec2, f64)> = None;
        for j in 1..k {
            for i in 1..k {
                let c = bb.min + Vec2::new(bb.width() * i as f64 / k as f64, bb.height() * j as f64 / k as f64);
                let d = clearance(c);
                if d > 0.0 && best.is_none_or(|(_, bd)| d > bd) {
                    best = Some((c, d));
                }
            }
        }
        let (center, _) = best?;
        Some(RadialChart {
            center,
            region: region.to_vec(),
            hull,
        })
    }

    pub fn center(&self) -> Vec2 {
        self.center
    }

    fn stretch(&self, w: Vec2, forward: bool) -> Vec2 {
        let d = w - self.center;
        let r = d.norm();
        if r == 0.0 {
            return w;
        }
        let dir = d * (1.0 / r);
        let (rr, rh) = (ray_extent(&self.region, self.center, dir), ray_extent(&self.hull, self.center, dir));
        if !(rr > 0.0 && rh > 0.0) {
            return w;
        }
        let s = if forward { rh / rr } else { rr / rh };
        self.center + d * s
    }

    /// Region to hull.
    pub fn to_chart(&self, w: Vec2) -> Vec2 {
        self.stretch(w, true)
    }

    /// Hull to region.
    pub fn from_chart(&self, w: Vec2) -> Vec2 {
        self.stretch(w, false)
    }
}
