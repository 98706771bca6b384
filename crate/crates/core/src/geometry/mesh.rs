use std::collections::{HashMap, VecDeque};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::vec2::{orient, Aabb, Vec2};
use crate::error::{Error, Result};

/// On-disk form of a mesh. Boundary structure is derived on load.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeshData {
    pub vertices: Vec<Vec2>,
    pub triangles: Vec<[usize; 3]>,
}

/// Planar triangulation with counterclockwise triangles and derived
/// adjacency. Immutable after construction.
#[derive(Clone, Debug)]
pub struct TriangleMesh {
    vertices: Vec<Vec2>,
    triangles: Vec<[usize; 3]>,
    areas: Vec<f64>,
    boundary_loops: Vec<Vec<usize>>,
    vertex_adjacency: Vec<Vec<usize>>,
    vertex_triangles: Vec<Vec<usize>>,
    /// `neighbors[t][k]` is the triangle across edge `(t[k], t[k+1])`.
    neighbors: Vec<[Option<usize>; 3]>,
    on_boundary: Vec<bool>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec2>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let nv = vertices.len();
        if triangles.is_empty() {
            return Err(Error::invalid("mesh has no triangles"));
        }
        for (i, v) in vertices.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::invalid(format!("vertex {i} has a non-finite coordinate")));
            }
        }
        let mut areas = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for &i in tri {
                if i >= nv {
                    return Err(Error::invalid(format!(
                        "triangle {t} references vertex {i}, but the mesh has {nv} vertices"
                    )));
                }
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::invalid(format!("triangle {t} repeats a vertex")));
            }
            let area = 0.5 * orient(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if area.is_nan() || area <= 0.0 {
                return Err(Error::DegenerateTriangle { triangle: t, area });
            }
            areas.push(area);
        }

        let mut directed: HashMap<(usize, usize), (usize, usize)> = HashMap::with_capacity(3 * triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let e = (tri[k], tri[(k + 1) % 3]);
                if directed.insert(e, (t, k)).is_some() {
                    return Err(Error::invalid(format!(
                        "edge ({}, {}) is used twice with the same orientation (non-manifold or inconsistently oriented)",
                        e.0, e.1
                    )));
                }
            }
        }
        let mut neighbors = vec![[None; 3]; triangles.len()];
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                neighbors[t][k] = directed.get(&(b, a)).map(|&(s, _)| s);
            }
        }

        let mut vertex_triangles = vec![Vec::new(); nv];
        let mut vertex_adjacency: Vec<Vec<usize>> = vec![Vec::new(); nv];
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                vertex_triangles[tri[k]].push(t);
                vertex_adjacency[tri[k]].push(tri[(k + 1) % 3]);
                vertex_adjacency[tri[k]].push(tri[(k + 2) % 3]);
            }
        }
        for adj in &mut vertex_adjacency {
            adj.sort_unstable();
            adj.dedup();
        }

        let mut mesh = TriangleMesh {
            vertices,
            triangles,
            areas,
            boundary_loops: Vec::new(),
            vertex_adjacency,
            vertex_triangles,
            neighbors,
            on_boundary: vec![false; nv],
        };
        let all = vec![true; mesh.triangles.len()];
        mesh.boundary_loops = mesh.region_boundary_loops(&all);
        for lp in &mesh.boundary_loops {
            for &v in lp {
                mesh.on_boundary[v] = true;
            }
        }
        Ok(mesh)
    }

    pub fn from_data(data: MeshData) -> Result<Self> {
        TriangleMesh::new(data.vertices, data.triangles)
    }

    pub fn to_data(&self) -> MeshData {
        MeshData {
            vertices: self.vertices.clone(),
            triangles: self.triangles.clone(),
        }
    }

    /// Parses the JSON mesh format, reporting the offending field on failure.
    pub fn from_json(text: &str) -> Result<Self> {
        let data: MeshData = serde_json::from_str(text).map_err(|e| Error::Parse {
            context: format!("mesh JSON line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        TriangleMesh::from_data(data)
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Closed boundary cycles; the domain lies to the left of each.
    pub fn boundary_loops(&self) -> &[Vec<usize>] {
        &self.boundary_loops
    }

    pub fn vertex_adjacency(&self, v: usize) -> &[usize] {
        &self.vertex_adjacency[v]
    }

    pub fn vertex_triangles(&self, v: usize) -> &[usize] {
        &self.vertex_triangles[v]
    }

    pub fn triangle_neighbors(&self, t: usize) -> [Option<usize>; 3] {
        self.neighbors[t]
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.on_boundary[v]
    }

    pub fn num_edges(&self) -> usize {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(t, n)| n.iter().map(move |s| (t, *s)))
            .filter(|&(t, s)| s.is_none_or(|s| s > t))
            .count()
    }

    /// V - E + F with F counting triangles.
    pub fn euler_characteristic(&self) -> i64 {
        self.num_vertices() as i64 - self.num_edges() as i64 + self.num_triangles() as i64
    }

    pub fn bounding_box(&self) -> Aabb {
        Aabb::from_points(self.vertices.iter().copied())
    }

    pub fn max_edge_length(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|t| (0..3).map(move |k| (t[k], t[(k + 1) % 3])))
            .map(|(a, b)| self.vertices[a].distance(self.vertices[b]))
            .fold(0.0, f64::max)
    }

    /// Vertices of the triangles in `region`, ascending.
    pub fn region_vertices(&self, region: &[usize]) -> Vec<usize> {
        let mut seen = vec![false; self.num_vertices()];
        for &t in region {
            for &v in &self.triangles[t] {
                seen[v] = true;
            }
        }
        (0..self.num_vertices()).filter(|&v| seen[v]).collect()
    }

    /// Edge-connected components of the triangles flagged in `in_set`,
    /// each sorted ascending, ordered by their smallest triangle.
    pub fn components(&self, in_set: &[bool]) -> Vec<Vec<usize>> {
        let mut label = vec![usize::MAX; self.num_triangles()];
        let mut comps = Vec::new();
        let mut queue = VecDeque::new();
        for start in 0..self.num_triangles() {
            if !in_set[start] || label[start] != usize::MAX {
                continue;
            }
            let id = comps.len();
            let mut comp = Vec::new();
            label[start] = id;
            queue.push_back(start);
            while let Some(t) = queue.pop_front() {
                comp.push(t);
                for s in self.neighbors[t].into_iter().flatten() {
                    if in_set[s] && label[s] == usize::MAX {
                        label[s] = id;
                        queue.push_back(s);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps
    }

    /// Union of the edge-connected components of `set` that contain a seed
    /// triangle. Seeds outside `set` are treated as members.
    pub fn connected_component(&self, set: &[usize], seeds: &[usize]) -> Vec<usize> {
        let mut in_set = vec![false; self.num_triangles()];
        for &t in set.iter().chain(seeds) {
            in_set[t] = true;
        }
        let mut picked = vec![false; self.num_triangles()];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for &s in seeds {
            if !picked[s] {
                picked[s] = true;
                queue.push_back(s);
            }
        }
        while let Some(t) = queue.pop_front() {
            for s in self.neighbors[t].into_iter().flatten() {
                if in_set[s] && !picked[s] {
                    picked[s] = true;
                    queue.push_back(s);
                }
            }
        }
        (0..self.num_triangles()).filter(|&t| picked[t]).collect()
    }

    /// Boundary cycles of the triangle region flagged in `in_region`, with
    /// the region on the left. Pinch vertices are split between cycles by
    /// rotating around the vertex inside the region.
    pub fn region_boundary_loops(&self, in_region: &[bool]) -> Vec<Vec<usize>> {
        let is_border = |t: usize, k: usize| match self.neighbors[t][k] {
            Some(s) => !in_region[s],
            None => true,
        };
        let mut visited = vec![[false; 3]; self.num_triangles()];
        let mut loops = Vec::new();
        for t0 in 0..self.num_triangles() {
            if !in_region[t0] {
                continue;
            }
            for k0 in 0..3 {
                if visited[t0][k0] || !is_border(t0, k0) {
                    continue;
                }
                let mut lp = Vec::new();
                let (mut t, mut k) = (t0, k0);
                loop {
                    visited[t][k] = true;
                    lp.push(self.triangles[t][k]);
                    // Rotate counterclockwise around the head vertex until the
                    // next border half-edge leaving it is found.
                    let mut j = (k + 1) % 3;
                    let mut cur = t;
                    while !is_border(cur, j) {
                        let tail = self.triangles[cur][(j + 1) % 3];
                        let next = self.neighbors[cur][j].expect("interior edge has a neighbor");
                        let m = (0..3)
                            .find(|&m| self.triangles[next][m] == tail)
                            .expect("neighbor shares the edge");
                        cur = next;
                        j = (m + 1) % 3;
                    }
                    t = cur;
                    k = j;
                    if t == t0 && k == k0 {
                        break;
                    }
                }
                loops.push(lp);
            }
        }
        loops
    }

    /// Signed area enclosed by a vertex cycle (shoelace).
    pub fn loop_signed_area(&self, lp: &[usize]) -> f64 {
        polyline_signed_area(lp.iter().map(|&v| self.vertices[v]))
    }
}

impl Serialize for TriangleMesh {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Borrowed<'a> {
            vertices: &'a [Vec2],
            triangles: &'a [[usize; 3]],
        }
        Borrowed {
            vertices: &self.vertices,
            triangles: &self.triangles,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TriangleMesh {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let data = MeshData::deserialize(d)?;
        TriangleMesh::from_data(data).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn polyline_signed_area<I: IntoIterator<Item = Vec2>>(pts: I) -> f64 {
    let pts: Vec<Vec2> = pts.into_iter().collect();
    let n = pts.len();
    0.5 * (0..n).map(|i| pts[i].cross(pts[(i + 1) % n])).sum::<f64>()
}

/// Structured triangulation of `[0, width] x [0, height]` with
/// `resolution x resolution` cells. Diagonals alternate by quadrant so that
/// every triangle touching a corner also touches an interior vertex once
/// `resolution >= 2`.
pub fn build_rect_mesh(width: f64, height: f64, resolution: usize) -> Result<TriangleMesh> {
    build_rect_mesh_on(Vec2::ZERO, width, height, resolution)
}

/// As [`build_rect_mesh`], with the lower-left corner at `origin`.
pub fn build_rect_mesh_on(origin: Vec2, width: f64, height: f64, resolution: usize) -> Result<TriangleMesh> {
    if !(width > 0.0 && height > 0.0) || !width.is_finite() || !height.is_finite() {
        return Err(Error::invalid(format!(
            "rectangle dimensions must be positive, got {width} x {height}"
        )));
    }
    if resolution == 0 {
        return Err(Error::invalid("rectangle resolution must be at least 1"));
    }
    let n = resolution;
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let x = if i == n { width } else { width * i as f64 / n as f64 };
            let y = if j == n { height } else { height * j as f64 / n as f64 };
            vertices.push(origin + Vec2::new(x, y));
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            if (2 * i < n) == (2 * j < n) {
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            } else {
                triangles.push([a, b, d]);
                triangles.push([b, c, d]);
            }
        }
    }
    TriangleMesh::new(vertices, triangles)
}

/// Annulus `r_inner < |z| < r_outer` centered at the origin. Rings are
/// spaced geometrically, so every quad is an isosceles trapezoid of roughly
/// constant aspect ratio; vertex `k * angular_n + j` sits at radius index `k`
/// and angle `2 pi j / angular_n`. Boundary rings lie on the exact circles.
pub fn build_annulus_mesh(r_inner: f64, r_outer: f64, radial_n: usize, angular_n: usize) -> Result<TriangleMesh> {
    if !(r_inner > 0.0 && r_outer > r_inner) || !r_outer.is_finite() {
        return Err(Error::invalid(format!(
            "annulus radii must satisfy 0 < r_inner < r_outer, got {r_inner} and {r_outer}"
        )));
    }
    if radial_n == 0 {
        return Err(Error::invalid("annulus needs at least one radial layer"));
    }
    if angular_n < 3 {
        return Err(Error::invalid("annulus needs at least three angular divisions"));
    }
    let m = angular_n;
    let ratio = r_outer / r_inner;
    let mut vertices = Vec::with_capacity((radial_n + 1) * m);
    for k in 0..=radial_n {
        let rho = match k {
            0 => r_inner,
            k if k == radial_n => r_outer,
            k => r_inner * ratio.powf(k as f64 / radial_n as f64),
        };
        for j in 0..m {
            vertices.push(Vec2::from_polar(rho, 2.0 * PI * j as f64 / m as f64));
        }
    }
    let mut triangles = Vec::with_capacity(2 * radial_n * m);
    for k in 0..radial_n {
        for j in 0..m {
            let jn = (j + 1) % m;
            let (a, b, c, d) = (k * m + j, k * m + jn, (k + 1) * m + jn, (k + 1) * m + j);
            for tri in [[a, b, c], [a, c, d]] {
                if orient(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]) > 0.0 {
                    triangles.push(tri);
                } else {
                    triangles.push([tri[0], tri[2], tri[1]]);
                }
            }
        }
    }
    TriangleMesh::new(vertices, triangles)
}
