//! Brick-layout covers of a polygonal target by overlapping closed squares.
//!
//! Squares of side `s` are laid out in rows with pitch `s - o` in both
//! directions, odd rows shifted by half a pitch. With overlap `o < pitch / 2`
//! the horizontal overlap bands of consecutive rows never meet and no point
//! lies in more than three squares. Each square is then classified against
//! the target boundary; layouts where a square meets the boundary in anything
//! other than a single arc are discarded and the layout is shifted or shrunk.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PolygonalDomain, Vec2};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Square {
    pub center: Vec2,
    pub half_width: f64,
}

impl Square {
    pub fn min(&self) -> Vec2 {
        self.center - Vec2::new(self.half_width, self.half_width)
    }

    pub fn max(&self) -> Vec2 {
        self.center + Vec2::new(self.half_width, self.half_width)
    }

    pub fn side(&self) -> f64 {
        2.0 * self.half_width
    }

    pub fn diameter(&self) -> f64 {
        self.side() * std::f64::consts::SQRT_2
    }

    /// Closed containment, widened by `tol`.
    pub fn contains(&self, p: Vec2, tol: f64) -> bool {
        let d = p - self.center;
        d.x.abs() <= self.half_width + tol && d.y.abs() <= self.half_width + tol
    }

    /// Corners counterclockwise from the lower-left one.
    pub fn corners(&self) -> [Vec2; 4] {
        let (lo, hi) = (self.min(), self.max());
        [lo, Vec2::new(hi.x, lo.y), hi, Vec2::new(lo.x, hi.y)]
    }

    pub fn intersects(&self, o: &Square) -> bool {
        let (a0, a1, b0, b1) = (self.min(), self.max(), o.min(), o.max());
        a0.x <= b1.x && b0.x <= a1.x && a0.y <= b1.y && b0.y <= a1.y
    }

    /// Liang-Barsky clip of the segment `a -> b` to the closed square.
    pub fn clip_segment(&self, a: Vec2, b: Vec2) -> Option<(f64, f64)> {
        let (lo, hi) = (self.min(), self.max());
        let d = b - a;
        let mut t0: f64 = 0.0;
        let mut t1: f64 = 1.0;
        for (p, q) in [(-d.x, a.x - lo.x), (d.x, hi.x - a.x), (-d.y, a.y - lo.y), (d.y, hi.y - a.y)] {
            if p == 0.0 {
                if q < 0.0 {
                    return None;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
            }
        }
        (t0 <= t1).then_some((t0, t1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Internal,
    Boundary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub square: Square,
    pub kind: CellKind,
    /// For boundary cells, the target boundary arc inside the square,
    /// oriented with the target on its left.
    pub external_face: Option<Vec<Vec2>>,
    /// Boundary of the square's intersection with the target, counterclockwise.
    pub region: Vec<Vec2>,
    pub row: i64,
    pub col: i64,
}

impl Cell {
    pub fn diameter(&self) -> f64 {
        self.square.diameter()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoverConfig {
    /// Overlap between neighbouring squares as a fraction of the side; must lie in (0, 1/3).
    pub overlap_fraction: f64,
    pub max_cells: usize,
}

impl Default for CoverConfig {
    fn default() -> Self {
        CoverConfig {
            overlap_fraction: 0.2,
            max_cells: 200_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellCover {
    pub cells: Vec<Cell>,
    pub epsilon: f64,
    /// Largest number of closed cells sharing a point, computed exactly.
    pub multiplicity: usize,
    pub side: f64,
    /// Number of layouts tried before this one was accepted.
    pub attempts: usize,
}

impl CellCover {
    pub fn from_cells(cells: Vec<Cell>, epsilon: f64) -> Self {
        let multiplicity = exact_multiplicity(&cells);
        let side = cells.iter().map(|c| c.square.side()).fold(0.0, f64::max);
        CellCover {
            cells,
            epsilon,
            multiplicity,
            side,
            attempts: 0,
        }
    }
}

/// Largest number of closed squares containing a common point. The maximum
/// is attained at a point `(max left, max bottom)` of some overlapping
/// group, so only those candidates are examined.
pub fn exact_multiplicity(cells: &[Cell]) -> usize {
    if cells.is_empty() {
        return 0;
    }
    let widest = cells.iter().map(|c| c.square.side()).fold(0.0, f64::max);
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by(|&a, &b| cells[a].square.min().x.total_cmp(&cells[b].square.min().x));
    let mut best = 1;
    for (pos, &a) in order.iter().enumerate() {
        let sa = &cells[a].square;
        let mut group = vec![a];
        for &b in order[pos + 1..].iter() {
            if cells[b].square.min().x > sa.max().x {
                break;
            }
            if sa.intersects(&cells[b].square) {
                group.push(b);
            }
        }
        for &b in order[..pos].iter().rev() {
            if cells[b].square.min().x < sa.min().x - widest {
                break;
            }
            if sa.intersects(&cells[b].square) {
                group.push(b);
            }
        }
        for &i in &group {
            for &j in &group {
                let p = Vec2::new(
                    cells[i].square.min().x.max(sa.min().x),
                    cells[j].square.min().y.max(sa.min().y),
                );
                let count = group.iter().filter(|&&k| cells[k].square.contains(p, 0.0)).count();
                best = best.max(count);
            }
        }
    }
    best
}

enum Classified {
    Outside,
    Cell(CellKind, Option<Vec<Vec2>>, Vec<Vec2>),
    Invalid,
}

/// Intersection pieces of one closed loop with the square: either the whole
/// loop, or open arcs running from entry to exit.
fn loop_pieces(sq: &Square, lp: &[Vec2]) -> (bool, Vec<Vec<Vec2>>) {
    let n = lp.len();
    let clips: Vec<Option<(f64, f64)>> = (0..n).map(|k| sq.clip_segment(lp[k], lp[(k + 1) % n])).collect();
    if clips.iter().all(|c| *c == Some((0.0, 1.0))) {
        return (true, vec![lp.to_vec()]);
    }
    let continues = |k: usize| matches!(clips[k], Some((_, t1)) if t1 == 1.0) && matches!(clips[(k + 1) % n], Some((t0, _)) if t0 == 0.0);
    let mut pieces = Vec::new();
    for k in 0..n {
        let Some((t0, t1)) = clips[k] else { continue };
        let prev = (k + n - 1) % n;
        if t0 == 0.0 && continues(prev) {
            continue;
        }
        let mut pts = vec![lp[k].lerp(lp[(k + 1) % n], t0)];
        let mut m = k;
        let mut end_t = t1;
        while continues(m) {
            m = (m + 1) % n;
            pts.push(lp[m]);
            end_t = clips[m].unwrap().1;
        }
        pts.push(lp[m].lerp(lp[(m + 1) % n], end_t));
        pieces.push(pts);
    }
    (false, pieces)
}

fn classify(sq: &Square, target: &PolygonalDomain) -> Classified {
    let mut closed = 0;
    let mut pieces = Vec::new();
    for lp in target.loops() {
        let (whole, mut ps) = loop_pieces(sq, lp);
        if whole {
            closed += 1;
        } else {
            pieces.append(&mut ps);
        }
    }
    let tiny = 1e-12 * target.scale();
    if closed == 0 && pieces.is_empty() {
        return if target.contains_open(sq.center) {
            Classified::Cell(CellKind::Internal, None, sq.corners().to_vec())
        } else {
            Classified::Outside
        };
    }
    if closed == 1 + target.holes().len() && target.holes().is_empty() {
        // the whole target fits inside the square
        let outer = target.outer_loop().to_vec();
        return Classified::Cell(CellKind::Boundary, Some(outer.clone()), outer);
    }
    if closed > 0 || pieces.len() != 1 {
        return Classified::Invalid;
    }
    let arc = pieces.pop().unwrap();
    let (entry, exit) = (arc[0], *arc.last().unwrap());
    if entry.distance(exit) <= tiny {
        return Classified::Invalid;
    }
    let region = close_region(sq, &arc);
    Classified::Cell(CellKind::Boundary, Some(arc), region)
}

/// Perimeter parameter of a point on the square boundary, counterclockwise
/// from the lower-left corner.
fn perimeter_param(sq: &Square, p: Vec2) -> f64 {
    let (lo, hi) = (sq.min(), sq.max());
    let s = sq.side();
    let d = [(p.y - lo.y).abs(), (p.x - hi.x).abs(), (p.y - hi.y).abs(), (p.x - lo.x).abs()];
    let side = (0..4).min_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap();
    match side {
        0 => (p.x - lo.x).clamp(0.0, s),
        1 => s + (p.y - lo.y).clamp(0.0, s),
        2 => 2.0 * s + (hi.x - p.x).clamp(0.0, s),
        _ => 3.0 * s + (hi.y - p.y).clamp(0.0, s),
    }
}

/// Arc from entry to exit, then counterclockwise along the square from the
/// exit back to the entry.
fn close_region(sq: &Square, arc: &[Vec2]) -> Vec<Vec2> {
    let per = 4.0 * sq.side();
    let mut region = arc.to_vec();
    let t_exit = perimeter_param(sq, *arc.last().unwrap());
    let mut t_entry = perimeter_param(sq, arc[0]);
    if t_entry <= t_exit {
        t_entry += per;
    }
    let corners = sq.corners();
    for lap in 0..2 {
        for (k, c) in corners.iter().enumerate() {
            let t = k as f64 * sq.side() + lap as f64 * per;
            if t > t_exit && t < t_entry {
                region.push(*c);
            }
        }
    }
    region
}

struct Layout {
    side: f64,
    pitch: f64,
    origin: Vec2,
}

impl Layout {
    fn square(&self, row: i64, col: i64) -> Square {
        let shift = if row.rem_euclid(2) == 1 { 0.5 * self.pitch } else { 0.0 };
        let lo = self.origin + Vec2::new(col as f64 * self.pitch + shift, row as f64 * self.pitch);
        Square {
            center: lo + Vec2::new(0.5 * self.side, 0.5 * self.side),
            half_width: 0.5 * self.side,
        }
    }

    /// True when a target vertex sits on one of the layout's edge lines.
    fn touches_vertex(&self, target: &PolygonalDomain) -> bool {
        let tol = 1e-9 * target.scale();
        let o = self.side - self.pitch;
        let near = |v: f64| {
            let m = v.rem_euclid(self.pitch);
            [0.0, o, self.pitch].iter().any(|e| (m - e).abs() <= tol)
        };
        target.loops().flatten().any(|p| {
            let dy = p.y - self.origin.y;
            let dx = p.x - self.origin.x;
            near(dy) || near(dx) || near(dx - 0.5 * self.pitch)
        })
    }
}

/// Builds a cover of `target` by squares of diameter below `epsilon` and
/// multiplicity at most three.
pub fn build_cell_cover(target: &PolygonalDomain, epsilon: f64, config: &CoverConfig) -> Result<CellCover> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    let f = config.overlap_fraction;
    if !(f > 0.0 && f < 1.0 / 3.0) {
        return Err(Error::invalid(format!("overlap fraction must lie in (0, 1/3), got {f}")));
    }
    let bb = target.bounding_box();
    let mut side = 0.999 * epsilon / std::f64::consts::SQRT_2;
    let mut attempts = 0;

    // A single square may already hold the whole target.
    if side > bb.width().max(bb.height()) * (1.0 + 1e-9) {
        let sq = Square {
            center: bb.center(),
            half_width: 0.5 * side,
        };
        attempts += 1;
        if let Classified::Cell(kind, face, region) = classify(&sq, target) {
            let cell = Cell { square: sq, kind, external_face: face, region, row: 0, col: 0 };
            let mut cover = CellCover::from_cells(vec![cell], epsilon);
            cover.attempts = attempts;
            return Ok(cover);
        }
    }

    const JITTERS: usize = 4;
    for _level in 0..80 {
        let pitch = side * (1.0 - f);
        let rows = ((bb.height() + side) / pitch).ceil() as i64 + 2;
        let cols = ((bb.width() + side) / pitch).ceil() as i64 + 2;
        if (rows * cols) as u128 > 4 * config.max_cells as u128 {
            return Err(Error::Resource(format!(
                "cover would need about {} cells at side {side:.3e}, above the cap of {}",
                rows * cols,
                config.max_cells
            )));
        }
        'jitter: for j in 0..JITTERS {
            attempts += 1;
            // Jitter 0 centers a square on the target; the rest shift by
            // fixed irrational fractions of the pitch.
            let shift = if j == 0 {
                Vec2::ZERO
            } else {
                let a = (j as f64 * 0.618_033_988_749_895).fract();
                let b = (j as f64 * 0.414_213_562_373_095).fract();
                Vec2::new(a, b) * pitch
            };
            let layout = Layout {
                side,
                pitch,
                origin: bb.center() - Vec2::new(0.5 * side, 0.5 * side) + shift,
            };
            if layout.touches_vertex(target) {
                continue;
            }
            let row_lo = ((bb.min.y - side - layout.origin.y) / pitch).floor() as i64;
            let row_hi = ((bb.max.y - layout.origin.y) / pitch).ceil() as i64;
            let mut cells = Vec::new();
            for row in row_lo..=row_hi {
                let shift_x = if row.rem_euclid(2) == 1 { 0.5 * pitch } else { 0.0 };
                let col_lo = ((bb.min.x - side - layout.origin.x - shift_x) / pitch).floor() as i64;
                let col_hi = ((bb.max.x - layout.origin.x - shift_x) / pitch).ceil() as i64;
                for col in col_lo..=col_hi {
                    let sq = layout.square(row, col);
                    if sq.max().x < bb.min.x || sq.min().x > bb.max.x || sq.max().y < bb.min.y || sq.min().y > bb.max.y {
                        continue;
                    }
                    match classify(&sq, target) {
                        Classified::Outside => {}
                        Classified::Invalid => continue 'jitter,
                        Classified::Cell(kind, face, region) => {
                            cells.push(Cell { square: sq, kind, external_face: face, region, row, col });
                            if cells.len() > config.max_cells {
                                return Err(Error::Resource(format!(
                                    "cover exceeds the cap of {} cells at side {side:.3e}",
                                    config.max_cells
                                )));
                            }
                        }
                    }
                }
            }
            let mut cover = CellCover::from_cells(cells, epsilon);
            cover.side = side;
            cover.attempts = attempts;
            return Ok(cover);
        }
        side *= 0.85;
    }
    Err(Error::Resource(format!(
        "no valid cover found after {attempts} layouts; smallest side tried {side:.3e}"
    )))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverVerification {
    pub sample_count: usize,
    pub coverage_misses: Vec<Vec2>,
    /// `histogram[k]` counts samples inside exactly `k` cells.
    pub multiplicity_histogram: Vec<usize>,
    pub multiplicity: usize,
    pub max_diameter: f64,
    pub epsilon: f64,
    pub pass: bool,
}

/// Lattice points of the target's bounding box that lie in the target.
pub fn target_sample_grid(target: &PolygonalDomain, n: usize) -> Vec<Vec2> {
    let bb = target.bounding_box();
    let mut pts = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            let p = bb.min + Vec2::new(bb.width() * i as f64 / n as f64, bb.height() * j as f64 / n as f64);
            if target.contains(p) {
                pts.push(p);
            }
        }
    }
    pts
}

/// Checks coverage of `sample_points` that lie in the target, multiplicity
/// at most three and cell diameters below epsilon.
pub fn verify_cover(cover: &CellCover, target: &PolygonalDomain, sample_points: &[Vec2]) -> CoverVerification {
    let tol = 1e-12 * target.scale();
    let mut misses = Vec::new();
    let mut hist = vec![0usize; 1];
    let mut count = 0;
    for &p in sample_points {
        if !target.contains(p) {
            continue;
        }
        count += 1;
        let k = cover.cells.iter().filter(|c| c.square.contains(p, tol)).count();
        if k == 0 {
            misses.push(p);
        }
        if hist.len() <= k {
            hist.resize(k + 1, 0);
        }
        hist[k] += 1;
    }
    let multiplicity = exact_multiplicity(&cover.cells).max(hist.len() - 1);
    let max_diameter = cover.cells.iter().map(|c| c.diameter()).fold(0.0, f64::max);
    let pass = misses.is_empty() && multiplicity <= 3 && max_diameter < cover.epsilon;
    CoverVerification {
        sample_count: count,
        coverage_misses: misses,
        multiplicity_histogram: hist,
        multiplicity,
        max_diameter,
        epsilon: cover.epsilon,
        pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> PolygonalDomain {
        PolygonalDomain::rectangle(Vec2::ZERO, Vec2::new(1.0, 1.0)).unwrap()
    }

    #[test]
    fn clip_cases() {
        let sq = Square { center: Vec2::ZERO, half_width: 1.0 };
        assert_eq!(sq.clip_segment(Vec2::new(-2.0, 0.0), Vec2::new(2.0, 0.0)), Some((0.25, 0.75)));
        assert_eq!(sq.clip_segment(Vec2::new(-0.5, 0.0), Vec2::new(0.5, 0.0)), Some((0.0, 1.0)));
        assert_eq!(sq.clip_segment(Vec2::new(-2.0, 3.0), Vec2::new(2.0, 3.0)), None);
    }

    #[test]
    fn large_epsilon_single_cell() {
        let c = build_cell_cover(&unit(), 2.0, &CoverConfig::default()).unwrap();
        assert_eq!(c.cells.len(), 1);
        assert_eq!(c.multiplicity, 1);
        let v = verify_cover(&c, &unit(), &target_sample_grid(&unit(), 200));
        assert!(v.pass, "{v:?}");
    }

    #[test]
    fn unit_square_medium_epsilon() {
        let c = build_cell_cover(&unit(), 0.5, &CoverConfig::default()).unwrap();
        let v = verify_cover(&c, &unit(), &target_sample_grid(&unit(), 200));
        assert!(v.pass, "{v:?}");
        assert!(c.cells.iter().any(|c| c.kind == CellKind::Internal));
        assert!(c.cells.iter().any(|c| c.kind == CellKind::Boundary));
    }

    #[test]
    fn annulus_cells_meet_one_circle() {
        let t = PolygonalDomain::annulus(1.0, 1.25, 256).unwrap();
        let c = build_cell_cover(&t, 0.3, &CoverConfig::default()).unwrap();
        let v = verify_cover(&c, &t, &target_sample_grid(&t, 300));
        assert!(v.pass, "{v:?}");
        for cell in &c.cells {
            assert!(cell.diameter() < 0.3);
            if let Some(face) = &cell.external_face {
                let r: Vec<f64> = face[1..face.len() - 1].iter().map(|p| p.norm()).collect();
                let inner = r.iter().all(|&x| x < 1.1);
                let outer = r.iter().all(|&x| x > 1.1);
                assert!(inner || outer);
            }
        }
    }

    #[test]
    fn region_is_counterclockwise() {
        let t = PolygonalDomain::annulus(1.0, 1.25, 128).unwrap();
        let c = build_cell_cover(&t, 0.3, &CoverConfig::default()).unwrap();
        for cell in &c.cells {
            let a: f64 = (0..cell.region.len())
                .map(|i| cell.region[i].cross(cell.region[(i + 1) % cell.region.len()]))
                .sum();
            assert!(a > 0.0);
        }
    }

    #[test]
    fn verifier_flags_gaps_and_stacks() {
        let t = unit();
        let c = build_cell_cover(&t, 0.3, &CoverConfig::default()).unwrap();
        let samples = target_sample_grid(&t, 200);
        let mut holed = c.clone();
        let idx = holed.cells.iter().position(|c| c.kind == CellKind::Internal).unwrap();
        holed.cells.remove(idx);
        let v = verify_cover(&holed, &t, &samples);
        assert!(!v.coverage_misses.is_empty() && !v.pass);

        let cell = c.cells[0].clone();
        let stacked = CellCover::from_cells(vec![cell.clone(), cell.clone(), cell.clone(), cell], 0.3);
        let v = verify_cover(&stacked, &t, &samples);
        assert_eq!(v.multiplicity, 4);
        assert!(!v.pass);
    }

    #[test]
    fn tiny_epsilon_hits_cap() {
        let cfg = CoverConfig { max_cells: 100, ..CoverConfig::default() };
        assert!(matches!(build_cell_cover(&unit(), 0.01, &cfg), Err(Error::Resource(_))));
        assert!(build_cell_cover(&unit(), 0.3, &CoverConfig { overlap_fraction: 0.4, ..CoverConfig::default() }).is_err());
    }
}
