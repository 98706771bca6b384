//! Boundary-trace repair: turns the values a map takes on a pre-cell's
//! boundary cycle into an injective, orientation-preserving closed curve
//! around the cell.
//!
//! Runs of coinciding values are first spread along the trace itself, toward
//! the next distinct value, in proportion to source arclength. If that leaves
//! a simple counterclockwise polygon the repair stops there. Otherwise values
//! are projected onto the cell boundary to get a cyclic arclength parameter,
//! lifted, rearranged monotonically (sorting moves no value further than the
//! largest backtrack) and spread the same way along the boundary. A value
//! whose parameter survives unchanged keeps its original position.

use serde::{Deserialize, Serialize};

use super::cover::Cell;
use crate::error::{Error, Result};
use crate::geometry::{point_in_loop, point_segment_distance, segments_cross, Aabb, Vec2};

/// Closed polyline with arclength parametrization.
#[derive(Clone, Debug)]
pub struct ClosedPolyline {
    points: Vec<Vec2>,
    /// `cumulative[i]` is the arclength at `points[i]`; the last entry is the perimeter.
    cumulative: Vec<f64>,
}

impl ClosedPolyline {
    pub fn new(points: Vec<Vec2>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::invalid("closed polyline needs at least three points"));
        }
        let n = points.len();
        let mut cumulative = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for i in 0..n {
            acc += points[i].distance(points[(i + 1) % n]);
            cumulative.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::invalid("closed polyline has zero length"));
        }
        Ok(ClosedPolyline { points, cumulative })
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    /// Nearest point: arclength parameter in `[0, length)` and distance.
    pub fn project(&self, p: Vec2) -> (f64, f64) {
        let n = self.points.len();
        let mut best = (0.0, f64::INFINITY);
        for i in 0..n {
            let (a, b) = (self.points[i], self.points[(i + 1) % n]);
            let (d, s) = point_segment_distance(p, a, b);
            if d < best.1 {
                best = (self.cumulative[i] + s * (self.cumulative[i + 1] - self.cumulative[i]), d);
            }
        }
        (best.0.rem_euclid(self.length()), best.1)
    }

    pub fn point_at(&self, t: f64) -> Vec2 {
        let t = t.rem_euclid(self.length());
        let i = match self.cumulative.binary_search_by(|c| c.total_cmp(&t)) {
            Ok(i) => i.min(self.points.len() - 1),
            Err(i) => i - 1,
        };
        let n = self.points.len();
        let seg = self.cumulative[i + 1] - self.cumulative[i];
        let s = if seg > 0.0 { (t - self.cumulative[i]) / seg } else { 0.0 };
        self.points[i].lerp(self.points[(i + 1) % n], s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRepair {
    pub values: Vec<Vec2>,
    /// Arclength parameter of each repaired value on the cell boundary. When
    /// the boundary fallback ran, strictly increasing cyclically from the
    /// first entry.
    pub params: Vec<f64>,
    /// Whether the projection onto the cell boundary was needed.
    pub projected: bool,
    /// Largest displacement applied to any value.
    pub magnitude: f64,
    /// Whether a collapsed run on the external face was lifted off it.
    pub lifted: bool,
}

/// Fraction of the cell side within which values are snapped onto the external face.
pub const FACE_SNAP_FRACTION: f64 = 0.05;

/// Shape of the lift applied to runs squeezed onto the external face.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftProfile {
    /// Height of a run's end relative to its off-face neighbour, in (0, 1].
    pub fraction: f64,
    /// Power applied to the arclength ramp; below 1 raises the members near
    /// the source boundary.
    pub exponent: f64,
}

impl Default for LiftProfile {
    fn default() -> Self {
        LiftProfile { fraction: 0.5, exponent: 0.5 }
    }
}

/// Repairs a trace onto the boundary of `cell`'s region. `source` gives the
/// source positions of the loop vertices and is used only for arclength
/// proportions; `pinned` marks loop vertices on the source boundary. For
/// boundary cells, values outside the region within [`FACE_SNAP_FRACTION`]
/// of a side length from the external face are first moved onto it, so a
/// trace that follows a curved boundary ends up on the polygonal one.
pub fn repair_boundary_trace(
    values: &[Vec2],
    source: &[Vec2],
    pinned: &[bool],
    cell: &Cell,
    epsilon: f64,
    profile: &LiftProfile,
) -> Result<TraceRepair> {
    if pinned.len() != values.len() {
        return Err(Error::invalid("trace and pinned mask lengths differ"));
    }
    let poly = ClosedPolyline::new(cell.region.clone())?;
    let Some(face) = cell.external_face.as_ref().filter(|f| f.len() >= 2) else {
        return repair_trace_on(values, source, &poly, epsilon);
    };
    let reach = FACE_SNAP_FRACTION * cell.square.side();
    let snapped: Vec<Vec2> = values
        .iter()
        .map(|&w| {
            let (mut best, mut point) = (f64::INFINITY, w);
            for s in face.windows(2) {
                let (d, t) = point_segment_distance(w, s[0], s[1]);
                if d < best {
                    best = d;
                    point = s[0].lerp(s[1], t);
                }
            }
            if best <= reach && !point_in_loop(w, &cell.region) {
                point
            } else {
                w
            }
        })
        .collect();
    let lifted = lift_face_runs(&snapped, source, pinned, face, &cell.region, profile, 1e-12 * cell.square.side());
    let mut repair = repair_with_face(&lifted, source, &poly, epsilon, Some((face, reach)))?;
    repair.lifted = lifted != snapped;
    repair.magnitude = repair.values.iter().zip(values).map(|(a, b)| a.distance(*b)).fold(0.0, f64::max);
    Ok(repair)
}

pub fn repair_trace_on(values: &[Vec2], source: &[Vec2], poly: &ClosedPolyline, max_distance: f64) -> Result<TraceRepair> {
    repair_with_face(values, source, poly, max_distance, None)
}

fn repair_with_face(
    values: &[Vec2],
    source: &[Vec2],
    poly: &ClosedPolyline,
    max_distance: f64,
    face: Option<(&[Vec2], f64)>,
) -> Result<TraceRepair> {
    let n = values.len();
    if n != source.len() {
        return Err(Error::invalid("trace and source loop lengths differ"));
    }
    if n == 0 {
        return Ok(TraceRepair { values: Vec::new(), params: Vec::new(), magnitude: 0.0, projected: false, lifted: false });
    }
    let len = poly.length();
    let tol = 1e-9 * len;

    let mut raw = Vec::with_capacity(n);
    let mut on_poly = Vec::with_capacity(n);
    for (k, &w) in values.iter().enumerate() {
        let (t, d) = poly.project(w);
        on_poly.push(d <= 1e-12 * len);
        if d > max_distance {
            return Err(Error::Consistency(format!(
                "trace value {k} at ({}, {}) is {d:.3e} from the cell boundary, above {max_distance:.3e}",
                w.x, w.y
            )));
        }
        raw.push(t);
    }

    if let Some(spread) = spread_runs_along_trace(values, source, tol, face) {
        if is_simple_ccw(&spread, 1e-12 * len) {
            let magnitude = spread.iter().zip(values).map(|(a, b)| a.distance(*b)).fold(0.0, f64::max);
            let params = spread.iter().map(|&w| poly.project(w).0).collect();
            return Ok(TraceRepair { values: spread, params, magnitude, projected: false, lifted: false });
        }
    }

    // Continuous lift, each increment taken in (-L/2, L/2].
    let wrap = |d: f64| {
        let mut d = d.rem_euclid(len);
        if d > 0.5 * len {
            d -= len;
        }
        d
    };
    let mut lift = vec![raw[0]; n];
    for k in 1..n {
        lift[k] = lift[k - 1] + wrap(raw[k] - raw[k - 1]);
    }
    let anchor = (0..n).min_by(|&a, &b| lift[a].total_cmp(&lift[b])).unwrap();
    let v0 = lift[anchor];
    let winding = lift[n - 1] + wrap(raw[0] - raw[n - 1]) - lift[0];

    // Rotated order starting at the anchor; entries before the anchor come
    // one turn later.
    let order: Vec<usize> = (0..n).map(|i| (anchor + i) % n).collect();
    let mut y: Vec<f64> = order
        .iter()
        .map(|&k| {
            let v = if k < anchor { lift[k] + winding.max(0.0) } else { lift[k] };
            v.clamp(v0, v0 + len)
        })
        .collect();
    y.sort_by(f64::total_cmp);

    // Source arclength along the rotated loop.
    let mut s = vec![0.0; n + 1];
    for i in 0..n {
        s[i + 1] = s[i] + source[order[i]].distance(source[order[(i + 1) % n]]);
    }
    let perimeter = s[n];
    let starts: Vec<usize> = (0..n)
        .filter(|&i| {
            let prev = if i == 0 { y[n - 1] - len } else { y[i - 1] };
            y[i] - prev > tol
        })
        .collect();
    let mut out = y.clone();
    if starts.is_empty() {
        for i in 0..n {
            let frac = if perimeter > 0.0 { s[i] / perimeter } else { i as f64 / n as f64 };
            out[i] = y[0] + frac * len;
        }
    } else {
        for (r, &a) in starts.iter().enumerate() {
            let b = starts[(r + 1) % starts.len()];
            let wraps = b <= a;
            let target = if wraps { y[b] + len } else { y[b] };
            let s_end = if wraps { s[b] + perimeter } else { s[b] };
            let count = if wraps { b + n - a } else { b - a };
            for m in 1..count {
                let i = (a + m) % n;
                let si = if i < a { s[i] + perimeter } else { s[i] };
                let frac = if s_end > s[a] { (si - s[a]) / (s_end - s[a]) } else { m as f64 / count as f64 };
                out[i] = y[a] + frac * (target - y[a]);
            }
        }
    }

    let mut repaired = vec![Vec2::ZERO; n];
    let mut params = vec![0.0; n];
    let mut magnitude: f64 = 0.0;
    for (i, &k) in order.iter().enumerate() {
        let t = out[i];
        let unchanged = on_poly[k] && (wrap(t - raw[k])).abs() <= 1e-12 * len;
        let p = if unchanged { values[k] } else { poly.point_at(t) };
        magnitude = magnitude.max(p.distance(values[k]));
        repaired[k] = p;
        params[k] = t.rem_euclid(len);
    }
    Ok(TraceRepair { values: repaired, params, magnitude, projected: true, lifted: false })
}

/// Arclength parameter of the nearest point on an open polyline, and the distance.
fn face_param(face: &[Vec2], w: Vec2) -> (f64, f64) {
    let mut acc = 0.0;
    let mut best = (0.0, f64::INFINITY);
    for s in face.windows(2) {
        let l = s[0].distance(s[1]);
        let (d, t) = point_segment_distance(w, s[0], s[1]);
        if d < best.1 {
            best = (acc + t * l, d);
        }
        acc += l;
    }
    best
}

fn face_point(face: &[Vec2], t: f64) -> Vec2 {
    let mut acc = 0.0;
    for s in face.windows(2) {
        let l = s[0].distance(s[1]);
        if t <= acc + l {
            return s[0].lerp(s[1], if l > 0.0 { ((t - acc) / l).clamp(0.0, 1.0) } else { 0.0 });
        }
        acc += l;
    }
    *face.last().unwrap()
}

/// Unit normal of the face at parameter `t`.
fn face_normal(face: &[Vec2], t: f64) -> Vec2 {
    let mut acc = 0.0;
    let mut seg = (face[0], face[1]);
    for s in face.windows(2) {
        seg = (s[0], s[1]);
        acc += s[0].distance(s[1]);
        if t <= acc {
            break;
        }
    }
    let d = seg.1 - seg.0;
    d.perp() * (1.0 / d.norm().max(1e-300))
}

/// A maximal run of values lying on the external face whose face parameter
/// is not strictly monotone, such as a collar squeezed onto the face, is
/// lifted off the face into the cell. Members on the source boundary
/// (`pinned`) stay on the face; the others rise along a power ramp in source arclength
/// toward a fraction of the height of the off-face neighbour at the
/// nearer end of the run.
/// A run with no pinned member bridges linearly between the two end heights.
/// The collar then gets a band of positive width instead of a fold.
fn lift_face_runs(
    values: &[Vec2],
    source: &[Vec2],
    pinned: &[bool],
    face: &[Vec2],
    region: &[Vec2],
    profile: &LiftProfile,
    tol: f64,
) -> Vec<Vec2> {
    let n = values.len();
    let fp: Vec<(f64, f64)> = values.iter().map(|&w| face_param(face, w)).collect();
    let on = |i: usize| fp[i % n].1 <= tol;
    let Some(start) = (0..n).find(|&i| !on(i)) else {
        return values.to_vec();
    };
    let seg = |m: usize| source[m % n].distance(source[(m + 1) % n]);
    let mut out = values.to_vec();
    let mut a = start + 1;
    while a < start + n {
        if !on(a) {
            a += 1;
            continue;
        }
        let mut b = a;
        while b + 1 < start + n && on(b + 1) {
            b += 1;
        }
        let (ta, tb) = (fp[a % n].0, fp[b % n].0);
        let sign = (tb - ta).signum();
        let monotone = ta != tb && (a..b).all(|m| (fp[(m + 1) % n].0 - fp[m % n].0) * sign > tol);
        if b > a && !monotone {
            // s[k] is the source arclength from the previous neighbour a - 1 to member a + k.
            let mut s = Vec::with_capacity(b - a + 2);
            let mut acc = 0.0;
            for m in a..=b + 1 {
                acc += seg(m - 1);
                s.push(acc);
            }
            let total = s[b - a + 1];
            // Heights of the neighbours: distance to the face, negative outside the region.
            let height = |k: usize| {
                let d = fp[k % n].1;
                if point_in_loop(values[k % n], region) {
                    d
                } else {
                    -d
                }
            };
            // The band stays below the neighbours so the layer above keeps its room.
            let (hp, hn) = (profile.fraction * height(a - 1).max(0.0), profile.fraction * height(b + 1).max(0.0));
            let first = (a..=b).find(|&m| pinned[m % n]);
            let last = (a..=b).rev().find(|&m| pinned[m % n]);
            for m in a..=b {
                let (t, _) = fp[m % n];
                let base = face_point(face, t);
                let mut nrm = face_normal(face, t);
                if !point_in_loop(base + nrm * (16.0 * tol), region) {
                    nrm = nrm * -1.0;
                }
                let sm = s[m - a];
                let h = match (first, last) {
                    (Some(f), _) if m < f => hp * ramp(s[f - a] - sm, s[f - a], profile.exponent),
                    (_, Some(l)) if m > l => hn * ramp(sm - s[l - a], total - s[l - a], profile.exponent),
                    (Some(_), Some(_)) => 0.0,
                    _ => hp + (hn - hp) * ramp(sm, total, 1.0),
                };
                out[m % n] = base + nrm * h;
            }
        }
        a = b + 1;
    }
    out
}

fn ramp(x: f64, len: f64, exponent: f64) -> f64 {
    if len > 0.0 {
        (x / len).clamp(0.0, 1.0).powf(exponent)
    } else {
        0.0
    }
}

/// Moves the members of each run of coinciding values onto the segment to a
/// neighbouring distinct value. A run next to the external face spreads away
/// from it, keeping the member adjacent to the face in place; any other run
/// spreads toward the nearer neighbour. `None` when every value coincides.
fn spread_runs_along_trace(values: &[Vec2], source: &[Vec2], tol: f64, face: Option<(&[Vec2], f64)>) -> Option<Vec<Vec2>> {
    let n = values.len();
    let same = |i: usize| values[i].distance(values[(i + 1) % n]) <= tol;
    let start = (0..n).find(|&i| !same((i + n - 1) % n))?;
    let on_face = |w: Vec2| match face {
        Some((f, reach)) => f.windows(2).any(|s| point_segment_distance(w, s[0], s[1]).0 <= reach),
        None => false,
    };
    let src_len = |m: usize| source[m % n].distance(source[(m + 1) % n]);
    let mut out = values.to_vec();
    let mut a = start;
    loop {
        let mut b = a;
        while same(b % n) {
            b += 1;
        }
        // Run a..=b, previous distinct value at a - 1, next at b + 1.
        if b > a {
            let p = values[a % n];
            let (prev, next) = (values[(a + n - 1) % n], values[(b + 1) % n]);
            let forward = match (on_face(prev), on_face(next)) {
                (true, false) => true,
                (false, true) => false,
                _ => p.distance(next) <= p.distance(prev),
            };
            if forward {
                // Member a stays; the rest move toward `next`.
                let total: f64 = (a..=b).map(src_len).sum();
                let mut acc = 0.0;
                for m in a + 1..=b {
                    acc += src_len(m - 1);
                    let frac = if total > 0.0 { acc / total } else { (m - a) as f64 / (b - a + 1) as f64 };
                    out[m % n] = p.lerp(next, frac);
                }
            } else {
                // Member b stays; the rest move toward `prev`.
                let total: f64 = (a - 1..b).map(src_len).sum();
                let mut acc = 0.0;
                for m in (a..b).rev() {
                    acc += src_len(m);
                    let frac = if total > 0.0 { acc / total } else { (b - m) as f64 / (b - a + 1) as f64 };
                    out[m % n] = p.lerp(prev, frac);
                }
            }
        }
        a = b + 1;
        if a >= start + n {
            break;
        }
    }
    Some(out)
}

/// Simple polygon with positive signed area; vertices closer than `tol` to a
/// non-incident edge count as touching.
fn is_simple_ccw(pts: &[Vec2], tol: f64) -> bool {
    let n = pts.len();
    if n < 3 {
        return false;
    }
    let area: f64 = (0..n).map(|i| pts[i].cross(pts[(i + 1) % n])).sum();
    if !(area > 0.0) {
        return false;
    }
    let edge = |i: usize| (pts[i], pts[(i + 1) % n]);
    let boxes: Vec<Aabb> = (0..n).map(|i| Aabb::from_points([edge(i).0, edge(i).1]).expanded(tol)).collect();
    let near = |p: Vec2, (a, b): (Vec2, Vec2)| point_segment_distance(p, a, b).0 <= tol;
    for i in 0..n {
        let ei = edge(i);
        if ei.0.distance(ei.1) <= tol {
            return false;
        }
        for j in i + 1..n {
            if !boxes[i].intersects(&boxes[j]) {
                continue;
            }
            let ej = edge(j);
            if j == i + 1 {
                // Shared vertex ei.1 == ej.0: no fold-back.
                if near(ej.1, ei) || near(ei.0, ej) {
                    return false;
                }
            } else if i == 0 && j == n - 1 {
                if near(ej.0, ei) || near(ei.1, ej) {
                    return false;
                }
            } else if segments_cross(ei.0, ei.1, ej.0, ej.1, 0.0)
                || near(ej.0, ei)
                || near(ej.1, ei)
                || near(ei.0, ej)
                || near(ei.1, ej)
            {
                return false;
            }
        }
    }
    true
}
