use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::mesh::{MeshData, TriangleMesh};
use super::vec2::Vec2;
use crate::error::{Error, Result};

/// Piecewise-linear map given by one image point per mesh vertex.
#[derive(Clone, Debug)]
pub struct DiscreteMap {
    mesh: Arc<TriangleMesh>,
    images: Vec<Vec2>,
}

impl DiscreteMap {
    pub fn new(mesh: Arc<TriangleMesh>, images: Vec<Vec2>) -> Result<Self> {
        if images.len() != mesh.num_vertices() {
            return Err(Error::invalid(format!(
                "map has {} images for {} vertices",
                images.len(),
                mesh.num_vertices()
            )));
        }
        if let Some(i) = images.iter().position(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("image of vertex {i} is not finite")));
        }
        Ok(DiscreteMap { mesh, images })
    }

    pub fn identity(mesh: Arc<TriangleMesh>) -> Self {
        let images = mesh.vertices().to_vec();
        DiscreteMap { mesh, images }
    }

    pub fn from_fn(mesh: Arc<TriangleMesh>, f: impl Fn(Vec2) -> Vec2) -> Result<Self> {
        let images = mesh.vertices().iter().map(|&p| f(p)).collect();
        DiscreteMap::new(mesh, images)
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> &Arc<TriangleMesh> {
        &self.mesh
    }

    pub fn images(&self) -> &[Vec2] {
        &self.images
    }

    pub fn image(&self, v: usize) -> Vec2 {
        self.images[v]
    }

    /// Replaces one image. Callers keep the values finite.
    pub(crate) fn set_image(&mut self, v: usize, p: Vec2) {
        debug_assert!(p.is_finite());
        self.images[v] = p;
    }

    pub fn with_images(&self, images: Vec<Vec2>) -> Result<Self> {
        DiscreteMap::new(self.mesh.clone(), images)
    }

    pub fn same_mesh(&self, other: &DiscreteMap) -> bool {
        Arc::ptr_eq(&self.mesh, &other.mesh)
            || (self.mesh.vertices() == other.mesh.vertices() && self.mesh.triangles() == other.mesh.triangles())
    }

    /// Image points of triangle `t`.
    pub fn triangle_images(&self, t: usize) -> [Vec2; 3] {
        let [a, b, c] = self.mesh.triangles()[t];
        [self.images[a], self.images[b], self.images[c]]
    }

    /// Largest vertex displacement between two maps on the same mesh.
    pub fn sup_distance(&self, other: &DiscreteMap) -> Result<f64> {
        if !self.same_mesh(other) {
            return Err(Error::invalid("maps are defined on different meshes"));
        }
        Ok(self
            .images
            .iter()
            .zip(&other.images)
            .map(|(a, b)| a.distance(*b))
            .fold(0.0, f64::max))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let data: MapData = serde_json::from_str(text).map_err(|e| Error::Parse {
            context: format!("map JSON line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        DiscreteMap::try_from(data)
    }
}

#[derive(Serialize, Deserialize)]
struct MapData {
    mesh: MeshData,
    images: Vec<Vec2>,
}

impl TryFrom<MapData> for DiscreteMap {
    type Error = Error;
    fn try_from(d: MapData) -> Result<Self> {
        DiscreteMap::new(Arc::new(TriangleMesh::from_data(d.mesh)?), d.images)
    }
}

impl Serialize for DiscreteMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Borrowed<'a> {
            mesh: &'a TriangleMesh,
            images: &'a [Vec2],
        }
        Borrowed {
            mesh: &self.mesh,
            images: &self.images,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DiscreteMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        DiscreteMap::try_from(MapData::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}
