//! Read-only checks on discrete maps: fiber connectivity, Jacobian signs,
//! global injectivity and the logarithmic modulus-of-continuity estimate.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::functionals::{energy_dirichlet, triangle_differentials};
use crate::geometry::{orient, point_segment_distance, segments_cross, Aabb, DiscreteMap, PolygonalDomain, Vec2};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub sampled_points: Vec<Vec2>,
    /// Edge-connected components of the thickened fiber over each sample.
    pub fiber_component_counts: Vec<usize>,
    pub delta: f64,
    pub pass: bool,
}

impl MonotonicityReport {
    pub fn failing_count(&self) -> usize {
        self.fiber_component_counts.iter().filter(|&&c| c > 1).count()
    }

    pub fn failing_points(&self) -> Vec<Vec2> {
        self.sampled_points
            .iter()
            .zip(&self.fiber_component_counts)
            .filter(|(_, &c)| c > 1)
            .map(|(p, _)| *p)
            .collect()
    }
}

/// Twice the largest image-triangle diameter; fibers thinner than the image
/// resolution cannot be resolved.
pub fn default_fiber_delta(map: &DiscreteMap) -> f64 {
    let mut d: f64 = 0.0;
    for t in 0..map.mesh().num_triangles() {
        let [a, b, c] = map.triangle_images(t);
        d = d.max(a.distance(b)).max(b.distance(c)).max(c.distance(a));
    }
    2.0 * d
}

fn distance_to_triangle(p: Vec2, [a, b, c]: [Vec2; 3]) -> f64 {
    let o1 = orient(a, b, p);
    let o2 = orient(b, c, p);
    let o3 = orient(c, a, p);
    if (o1 >= 0.0 && o2 >= 0.0 && o3 >= 0.0) || (o1 <= 0.0 && o2 <= 0.0 && o3 <= 0.0) {
        let area = orient(a, b, c);
        if area != 0.0 {
            return 0.0;
        }
    }
    point_segment_distance(p, a, b)
        .0
        .min(point_segment_distance(p, b, c).0)
        .min(point_segment_distance(p, c, a).0)
}

/// Samples a `sample_grid x sample_grid` lattice over the bounding box of
/// the target and the image, and counts for each point the edge-connected
/// components of the set of triangles whose image comes within `delta` of
/// it. Points outside the target with an empty fiber are dropped.
/// `delta = None` uses [`default_fiber_delta`].
pub fn check_monotone_fibers(
    map: &DiscreteMap,
    target: &PolygonalDomain,
    sample_grid: usize,
    delta: Option<f64>,
) -> MonotonicityReport {
    let delta = delta.unwrap_or_else(|| default_fiber_delta(map));
    let n = sample_grid.max(1);
    let mut bb = target.bounding_box();
    for &w in map.images() {
        bb.include(w);
    }
    let step = Vec2::new(bb.width() / n as f64, bb.height() / n as f64);
    let mut samples = Vec::with_capacity(n * n);
    let mut lattice = vec![usize::MAX; n * n];
    for j in 0..n {
        for i in 0..n {
            lattice[j * n + i] = samples.len();
            samples.push(bb.min + Vec2::new((i as f64 + 0.5) * step.x, (j as f64 + 0.5) * step.y));
        }
    }

    let mesh = map.mesh();
    let mut fibers: Vec<Vec<usize>> = vec![Vec::new(); samples.len()];
    for t in 0..mesh.num_triangles() {
        let img = map.triangle_images(t);
        let tb = Aabb::from_points(img).expanded(delta);
        let i0 = (((tb.min.x - bb.min.x) / step.x - 0.5).ceil().max(0.0)) as usize;
        let j0 = (((tb.min.y - bb.min.y) / step.y - 0.5).ceil().max(0.0)) as usize;
        let i1 = ((tb.max.x - bb.min.x) / step.x - 0.5).floor();
        let j1 = ((tb.max.y - bb.min.y) / step.y - 0.5).floor();
        if i1 < 0.0 || j1 < 0.0 {
            continue;
        }
        let (i1, j1) = ((i1 as usize).min(n - 1), (j1 as usize).min(n - 1));
        for j in j0..=j1 {
            for i in i0..=i1 {
                let s = lattice[j * n + i];
                if s != usize::MAX && distance_to_triangle(samples[s], img) <= delta {
                    fibers[s].push(t);
                }
            }
        }
    }

    let mut mark = vec![usize::MAX; mesh.num_triangles()];
    let mut seen = vec![usize::MAX; mesh.num_triangles()];
    let mut stack = Vec::new();
    let counts: Vec<usize> = fibers
        .iter()
        .enumerate()
        .map(|(s, fiber)| {
            for &t in fiber {
                mark[t] = s;
            }
            let mut comps = 0;
            for &t in fiber {
                if seen[t] == s {
                    continue;
                }
                comps += 1;
                seen[t] = s;
                stack.push(t);
                while let Some(u) = stack.pop() {
                    for w in mesh.triangle_neighbors(u).into_iter().flatten() {
                        if mark[w] == s && seen[w] != s {
                            seen[w] = s;
                            stack.push(w);
                        }
                    }
                }
            }
            comps
        })
        .collect();
    let (samples, counts): (Vec<Vec2>, Vec<usize>) = samples
        .into_iter()
        .zip(counts)
        .filter(|&(p, c)| c > 0 || target.contains(p))
        .unzip();
    let pass = counts.iter().all(|&c| c <= 1);
    MonotonicityReport {
        sampled_points: samples,
        fiber_component_counts: counts,
        delta,
        pass,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientationCensus {
    pub positive: usize,
    pub zero: usize,
    pub negative: usize,
    pub tolerance: f64,
    pub zero_triangles: Vec<usize>,
    pub negative_triangles: Vec<usize>,
}

impl OrientationCensus {
    pub fn all_positive(&self) -> bool {
        self.zero == 0 && self.negative == 0
    }
}

/// Classifies every triangle by the sign of its Jacobian. Values within
/// `1e-12 * (image scale / source scale)^2` of zero count as zero.
pub fn check_orientation(map: &DiscreteMap) -> Result<OrientationCensus> {
    let src = map.mesh().bounding_box().diagonal();
    let img = Aabb::from_points(map.images().iter().copied()).diagonal();
    let tolerance = 1e-12 * (img / src).powi(2);
    let mut c = OrientationCensus {
        positive: 0,
        zero: 0,
        negative: 0,
        tolerance,
        zero_triangles: Vec::new(),
        negative_triangles: Vec::new(),
    };
    for (t, d) in triangle_differentials(map)?.iter().enumerate() {
        if d.jacobian > tolerance {
            c.positive += 1;
        } else if d.jacobian < -tolerance {
            c.negative += 1;
            c.negative_triangles.push(t);
        } else {
            c.zero += 1;
            c.zero_triangles.push(t);
        }
    }
    Ok(c)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectivityReport {
    pub injective: bool,
    pub census: OrientationCensus,
    /// Total number of overlapping image-triangle pairs.
    pub overlap_count: usize,
    /// Sorted witness pairs, truncated to the first [`MAX_WITNESSES`].
    pub overlaps: Vec<(usize, usize)>,
}

pub const MAX_WITNESSES: usize = 1000;

/// Whether the open image triangles of `t1` and `t2` intersect. The shared
/// vertex sector test assumes positive orientation.
fn images_overlap(map: &DiscreteMap, t1: usize, t2: usize, eps: f64) -> bool {
    let tri1 = map.mesh().triangles()[t1];
    let tri2 = map.mesh().triangles()[t2];
    let a = map.triangle_images(t1);
    let b = map.triangle_images(t2);
    for i in 0..3 {
        for j in 0..3 {
            if segments_cross(a[i], a[(i + 1) % 3], b[j], b[(j + 1) % 3], eps) {
                return true;
            }
        }
    }
    let strictly_inside = |p: Vec2, t: &[Vec2; 3]| {
        let s = orient(t[0], t[1], t[2]).signum();
        s * orient(t[0], t[1], p) > eps && s * orient(t[1], t[2], p) > eps && s * orient(t[2], t[0], p) > eps
    };
    for k in 0..3 {
        if !tri2.contains(&tri1[k]) && strictly_inside(a[k], &b) {
            return true;
        }
        if !tri1.contains(&tri2[k]) && strictly_inside(b[k], &a) {
            return true;
        }
    }
    let centroid = |t: &[Vec2; 3]| (t[0] + t[1] + t[2]) / 3.0;
    if strictly_inside(centroid(&a), &b) || strictly_inside(centroid(&b), &a) {
        return true;
    }
    // Fans folding over a shared vertex: compare the angular sectors there.
    let shared: Vec<usize> = (0..3).filter(|&k| tri2.contains(&tri1[k])).collect();
    if let [k] = shared[..] {
        let m = (0..3).find(|&m| tri2[m] == tri1[k]).unwrap();
        let v = a[k];
        let s1 = (a[(k + 1) % 3] - v, a[(k + 2) % 3] - v);
        let s2 = (b[(m + 1) % 3] - v, b[(m + 2) % 3] - v);
        let inside = |s: (Vec2, Vec2), d: Vec2| s.0.cross(d) > eps && d.cross(s.1) > eps;
        let same_dir = |x: Vec2, y: Vec2| x.cross(y).abs() <= eps && x.dot(y) > 0.0;
        if inside(s1, s2.0)
            || inside(s1, s2.1)
            || inside(s2, s1.0)
            || inside(s2, s1.1)
            || (same_dir(s1.0, s2.0) && same_dir(s1.1, s2.1))
        {
            return true;
        }
    }
    false
}

/// A map is injective when every Jacobian is positive and no two image
/// triangles that do not share an edge overlap.
pub fn check_injectivity(map: &DiscreteMap) -> Result<InjectivityReport> {
    let census = check_orientation(map)?;
    let mesh = map.mesh();
    let nt = mesh.num_triangles();
    let bb = Aabb::from_points(map.images().iter().copied());
    let scale = bb.diagonal().max(f64::MIN_POSITIVE);
    let eps = 1e-12 * scale * scale;

    let boxes: Vec<Aabb> = (0..nt).map(|t| Aabb::from_points(map.triangle_images(t))).collect();
    let cells_per_side = ((nt as f64).sqrt().ceil() as usize).clamp(1, 2048);
    let cw = (bb.width() / cells_per_side as f64).max(scale * 1e-9);
    let ch = (bb.height() / cells_per_side as f64).max(scale * 1e-9);
    let cell_range = |b: &Aabb| {
        let f = |v: f64, lo: f64, w: f64| (((v - lo) / w).floor().max(0.0) as usize).min(cells_per_side - 1);
        (f(b.min.x, bb.min.x, cw), f(b.max.x, bb.min.x, cw), f(b.min.y, bb.min.y, ch), f(b.max.y, bb.min.y, ch))
    };
    let mut grid: Vec<Vec<usize>> = vec![Vec::new(); cells_per_side * cells_per_side];
    for (t, b) in boxes.iter().enumerate() {
        let (i0, i1, j0, j1) = cell_range(b);
        for j in j0..=j1 {
            for i in i0..=i1 {
                grid[j * cells_per_side + i].push(t);
            }
        }
    }

    let mut overlaps = Vec::new();
    let mut overlap_count = 0;
    let mut stamp = vec![usize::MAX; nt];
    for t in 0..nt {
        let (i0, i1, j0, j1) = cell_range(&boxes[t]);
        let tri = mesh.triangles()[t];
        for j in j0..=j1 {
            for i in i0..=i1 {
                for &s in &grid[j * cells_per_side + i] {
                    if s <= t || stamp[s] == t {
                        continue;
                    }
                    stamp[s] = t;
                    if !boxes[t].intersects(&boxes[s]) {
                        continue;
                    }
                    let other = mesh.triangles()[s];
                    let shared = tri.iter().filter(|v| other.contains(v)).count();
                    if shared >= 2 {
                        continue;
                    }
                    if images_overlap(map, t, s, eps) {
                        overlap_count += 1;
                        if overlaps.len() < MAX_WITNESSES {
                            overlaps.push((t, s));
                        }
                    }
                }
            }
        }
    }
    overlaps.sort_unstable();
    Ok(InjectivityReport {
        injective: census.all_positive() && overlap_count == 0,
        census,
        overlap_count,
        overlaps,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusEntry {
    pub i: usize,
    pub j: usize,
    pub distance: f64,
    /// `|h(x_i) - h(x_j)|^2`
    pub lhs: f64,
    /// `C * E_2[h] / log(e + 1 / |x_i - x_j|)`
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusReport {
    pub constant: f64,
    pub dirichlet_energy: f64,
    pub entries: Vec<ModulusEntry>,
    /// Pairs with coincident source points, not evaluated.
    pub skipped: Vec<(usize, usize)>,
    pub max_ratio: f64,
    /// Smallest constant for which every evaluated pair satisfies the bound.
    pub fitted_constant: f64,
    pub pass: bool,
}

/// Evaluates `|h(x_i) - h(x_j)|^2 <= C E_2[h] / log(e + 1/|x_i - x_j|)` on
/// the given vertex pairs.
pub fn modulus_of_continuity_bound(map: &DiscreteMap, pairs: &[(usize, usize)], constant: f64) -> Result<ModulusReport> {
    let energy = energy_dirichlet(map)?.total;
    let verts = map.mesh().vertices();
    let mut entries = Vec::with_capacity(pairs.len());
    let mut skipped = Vec::new();
    let mut max_ratio: f64 = 0.0;
    let mut fitted: f64 = 0.0;
    for &(i, j) in pairs {
        let d = verts[i].distance(verts[j]);
        if d == 0.0 {
            skipped.push((i, j));
            continue;
        }
        let lhs = map.image(i).distance(map.image(j)).powi(2);
        let log = (E + 1.0 / d).ln();
        let rhs = constant * energy / log;
        let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
        max_ratio = max_ratio.max(ratio);
        if lhs > 0.0 {
            fitted = fitted.max(lhs * log / energy);
        }
        entries.push(ModulusEntry { i, j, distance: d, lhs, rhs, ratio });
    }
    Ok(ModulusReport {
        constant,
        dirichlet_energy: energy,
        entries,
        skipped,
        max_ratio,
        fitted_constant: fitted,
        pass: max_ratio <= 1.0,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::geometry::build_rect_mesh;

    fn square(n: usize) -> Arc<crate::geometry::TriangleMesh> {
        Arc::new(build_rect_mesh(1.0, 1.0, n).unwrap())
    }

    #[test]
    fn identity_is_injective_and_monotone() {
        let id = DiscreteMap::identity(square(8));
        let rep = check_injectivity(&id).unwrap();
        assert!(rep.injective, "{rep:?}");
        assert_eq!(rep.census.positive, id.mesh().num_triangles());
        let target = PolygonalDomain::rectangle(Vec2::ZERO, Vec2::new(1.0, 1.0)).unwrap();
        let mono = check_monotone_fibers(&id, &target, 20, None);
        assert!(mono.pass);
        assert_eq!(mono.sampled_points.len(), 400);
    }

    #[test]
    fn reflection_is_all_negative() {
        let m = DiscreteMap::from_fn(square(4), |p| Vec2::new(p.y, p.x)).unwrap();
        let c = check_orientation(&m).unwrap();
        assert_eq!(c.negative, m.mesh().num_triangles());
        assert_eq!(c.positive + c.zero + c.negative, m.mesh().num_triangles());
    }

    #[test]
    fn fold_is_detected() {
        let m = DiscreteMap::from_fn(square(8), |p| Vec2::new(0.5 - (p.x - 0.5).abs(), p.y)).unwrap();
        let rep = check_injectivity(&m).unwrap();
        assert!(!rep.injective);
        assert!(rep.overlap_count > 0);
        assert!(rep.census.negative > 0);
        let target = PolygonalDomain::rectangle(Vec2::ZERO, Vec2::new(0.5, 1.0)).unwrap();
        let mono = check_monotone_fibers(&m, &target, 16, Some(0.01));
        assert!(!mono.pass);
    }

    #[test]
    fn positive_overlap_is_caught() {
        // Two separate triangles sent onto the same image, both positively oriented.
        let verts = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(3.0, 0.0),
            Vec2::new(4.0, 0.0),
            Vec2::new(3.0, 1.0),
        ];
        let mesh = Arc::new(crate::geometry::TriangleMesh::new(verts, vec![[0, 1, 2], [3, 4, 5]]).unwrap());
        let imgs = mesh.vertices().iter().map(|p| Vec2::new(p.x % 3.0, p.y)).collect();
        let m = DiscreteMap::new(mesh, imgs).unwrap();
        let rep = check_injectivity(&m).unwrap();
        assert!(rep.census.all_positive());
        assert!(!rep.injective);
        assert_eq!(rep.overlaps, vec![(0, 1)]);
    }

    #[test]
    fn modulus_on_simple_maps() {
        let mesh = square(6);
        let pairs: Vec<(usize, usize)> = (0..mesh.num_vertices()).map(|i| (i, (i * 7 + 3) % mesh.num_vertices())).collect();
        let c = DiscreteMap::from_fn(mesh.clone(), |_| Vec2::new(1.0, 2.0)).unwrap();
        let rep = modulus_of_continuity_bound(&c, &pairs, 1.0).unwrap();
        assert!(rep.pass);
        assert!(rep.entries.iter().all(|e| e.lhs == 0.0));
        let id = DiscreteMap::identity(mesh);
        let rep = modulus_of_continuity_bound(&id, &pairs, 1.0).unwrap();
        assert!(rep.max_ratio.is_finite());
        assert!(rep.skipped.iter().all(|(i, j)| i == j));
        let refit = modulus_of_continuity_bound(&id, &pairs, rep.fitted_constant).unwrap();
        assert!(refit.max_ratio <= 1.0 + 1e-12);
    }
}
