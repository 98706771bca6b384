//! Per-triangle differentials and the discrete energies of piecewise-linear maps.
//!
//! Every integrand is constant on a triangle, so each energy is an exact
//! finite sum of `area * density`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DiscreteMap, Vec2};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub p: f64,
    pub total: f64,
    pub per_triangle: Vec<f64>,
}

impl EnergyReport {
    fn from_terms(p: f64, per_triangle: Vec<f64>) -> Self {
        let total = per_triangle.iter().sum();
        EnergyReport { p, total, per_triangle }
    }
}

/// Constant differential of a map on one triangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriangleDifferential {
    pub grad_u: Vec2,
    pub grad_v: Vec2,
    pub jacobian: f64,
    pub area: f64,
}

impl TriangleDifferential {
    /// Squared Hilbert-Schmidt norm `|Dh|^2`.
    pub fn hs_norm_sq(&self) -> f64 {
        self.grad_u.norm_sq() + self.grad_v.norm_sq()
    }
}

/// Gradients of the three barycentric coordinates of a counterclockwise
/// triangle, together with its area.
pub fn barycentric_gradients(p: [Vec2; 3]) -> Option<([Vec2; 3], f64)> {
    let twice_area = (p[1] - p[0]).cross(p[2] - p[0]);
    if !(twice_area > 0.0) {
        return None;
    }
    let inv = 1.0 / twice_area;
    Some((
        [
            (p[2] - p[1]).perp() * inv,
            (p[0] - p[2]).perp() * inv,
            (p[1] - p[0]).perp() * inv,
        ],
        0.5 * twice_area,
    ))
}

pub fn triangle_differentials(map: &DiscreteMap) -> Result<Vec<TriangleDifferential>> {
    let mesh = map.mesh();
    let verts = mesh.vertices();
    mesh.triangles()
        .iter()
        .enumerate()
        .map(|(t, tri)| {
            let (g, area) = barycentric_gradients([verts[tri[0]], verts[tri[1]], verts[tri[2]]]).ok_or(
                Error::DegenerateTriangle {
                    triangle: t,
                    area: mesh.area(t),
                },
            )?;
            let mut grad_u = Vec2::ZERO;
            let mut grad_v = Vec2::ZERO;
            for k in 0..3 {
                let w = map.image(tri[k]);
                grad_u += g[k] * w.x;
                grad_v += g[k] * w.y;
            }
            Ok(TriangleDifferential {
                grad_u,
                grad_v,
                jacobian: grad_u.x * grad_v.y - grad_u.y * grad_v.x,
                area,
            })
        })
        .collect()
}

fn check_p(p: f64) -> Result<()> {
    if p.is_finite() && p > 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("exponent p must exceed 1, got {p}")))
    }
}

/// `sum area * (|grad u|^p + |grad v|^p)`, the coordinate-wise p-energy.
pub fn energy_aniso(map: &DiscreteMap, p: f64) -> Result<EnergyReport> {
    check_p(p)?;
    let terms = triangle_differentials(map)?
        .iter()
        .map(|d| d.area * (d.grad_u.norm().powf(p) + d.grad_v.norm().powf(p)))
        .collect();
    Ok(EnergyReport::from_terms(p, terms))
}

/// `sum area * |Dh|^p`, the isotropic p-energy.
pub fn energy_iso(map: &DiscreteMap, p: f64) -> Result<EnergyReport> {
    check_p(p)?;
    let terms = triangle_differentials(map)?
        .iter()
        .map(|d| d.area * d.hs_norm_sq().powf(0.5 * p))
        .collect();
    Ok(EnergyReport::from_terms(p, terms))
}

/// Dirichlet energy `sum area * |Dh|^2`.
pub fn energy_dirichlet(map: &DiscreteMap) -> Result<EnergyReport> {
    let terms = triangle_differentials(map)?
        .iter()
        .map(|d| d.area * d.hs_norm_sq())
        .collect();
    Ok(EnergyReport::from_terms(2.0, terms))
}

/// `sum area * (|Dh|^2 + 1 / J)`; refuses maps with a nonpositive Jacobian.
pub fn energy_neohookean(map: &DiscreteMap) -> Result<EnergyReport> {
    let diffs = triangle_differentials(map)?;
    let bad: Vec<usize> = diffs
        .iter()
        .enumerate()
        .filter(|(_, d)| !(d.jacobian > 0.0))
        .map(|(t, _)| t)
        .collect();
    if !bad.is_empty() {
        return Err(Error::Orientation { triangles: bad });
    }
    let terms = diffs
        .iter()
        .map(|d| d.area * (d.hs_norm_sq() + 1.0 / d.jacobian))
        .collect();
    Ok(EnergyReport::from_terms(2.0, terms))
}

/// Sup-plus-seminorm distance `(sum area |D(f-g)|^p)^(1/p) + max |f - g|`.
pub fn w1p_distance(f: &DiscreteMap, g: &DiscreteMap, p: f64) -> Result<f64> {
    check_p(p)?;
    if !f.same_mesh(g) {
        return Err(Error::invalid("w1p distance needs maps on the same mesh"));
    }
    let diff: Vec<Vec2> = f.images().iter().zip(g.images()).map(|(a, b)| *a - *b).collect();
    let sup = diff.iter().map(|d| d.norm()).fold(0.0, f64::max);
    let d = f.with_images(diff)?;
    let semi = energy_iso(&d, p)?.total.powf(1.0 / p);
    Ok(semi + sup)
}

/// Constants `(lo, hi)` with `lo * iso <= aniso <= hi * iso` for every map.
/// They are sharp: one coordinate constant gives one side, equal gradient
/// norms give the other.
pub fn coercivity_constants(p: f64) -> (f64, f64) {
    let k = 2f64.powf(1.0 - 0.5 * p);
    (k.min(1.0), k.max(1.0))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;

    use super::*;
    use crate::geometry::{build_rect_mesh, TriangleMesh};

    fn unit_square() -> Arc<TriangleMesh> {
        Arc::new(build_rect_mesh(1.0, 1.0, 4).unwrap())
    }

    #[test]
    fn affine_differentials() {
        let mesh = unit_square();
        for d in triangle_differentials(&DiscreteMap::identity(mesh.clone())).unwrap() {
            assert!((d.grad_u - Vec2::new(1.0, 0.0)).norm() < 1e-14);
            assert!((d.grad_v - Vec2::new(0.0, 1.0)).norm() < 1e-14);
            assert!((d.jacobian - 1.0).abs() < 1e-14);
        }
        let m = DiscreteMap::from_fn(mesh.clone(), |p| Vec2::new(2.0 * p.x, 3.0 * p.y)).unwrap();
        for d in triangle_differentials(&m).unwrap() {
            assert!((d.jacobian - 6.0).abs() < 1e-13);
        }
        let m = DiscreteMap::from_fn(mesh, |p| Vec2::new(p.y, p.x)).unwrap();
        for d in triangle_differentials(&m).unwrap() {
            assert!((d.jacobian + 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn energies_of_simple_maps() {
        let mesh = unit_square();
        let id = DiscreteMap::identity(mesh.clone());
        assert!((energy_aniso(&id, 2.0).unwrap().total - 2.0).abs() < 1e-13);
        assert!((energy_iso(&id, 4.0).unwrap().total - 4.0).abs() < 1e-13);
        assert!((energy_neohookean(&id).unwrap().total - 3.0).abs() < 1e-13);
        let stretch = DiscreteMap::from_fn(mesh.clone(), |p| Vec2::new(2.0 * p.x, 0.5 * p.y)).unwrap();
        assert!((energy_neohookean(&stretch).unwrap().total - 5.25).abs() < 1e-12);
        let c = DiscreteMap::from_fn(mesh.clone(), |_| Vec2::new(0.3, 0.4)).unwrap();
        for p in [1.5, 2.0, 3.0] {
            assert_eq!(energy_aniso(&c, p).unwrap().total, 0.0);
        }
        assert!(matches!(energy_aniso(&id, 1.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(energy_iso(&id, 0.5), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn neohookean_rejects_flips() {
        let mesh = unit_square();
        let mut imgs = mesh.vertices().to_vec();
        imgs[12] = Vec2::new(0.9, -0.5);
        let m = DiscreteMap::new(mesh, imgs).unwrap();
        match energy_neohookean(&m) {
            Err(Error::Orientation { triangles }) => assert!(!triangles.is_empty()),
            other => panic!("expected orientation error, got {other:?}"),
        }
    }

    #[test]
    fn report_total_is_sum() {
        let mesh = unit_square();
        let m = DiscreteMap::from_fn(mesh, |p| Vec2::new(p.x * p.y, p.x - p.y * p.y)).unwrap();
        let r = energy_aniso(&m, 3.0).unwrap();
        let s: f64 = r.per_triangle.iter().sum();
        assert!((r.total - s).abs() <= 1e-12 * s);
        assert!(r.per_triangle.iter().all(|&e| e >= 0.0));
        let json = serde_json::to_value(&r).unwrap();
        assert!(json.get("per_triangle").is_some() && json.get("total").is_some());
    }

    #[test]
    fn distance_examples() {
        let mesh = unit_square();
        let id = DiscreteMap::identity(mesh.clone());
        assert_eq!(w1p_distance(&id, &id, 2.0).unwrap(), 0.0);
        let shifted = DiscreteMap::from_fn(mesh.clone(), |p| p + Vec2::new(0.3, -0.4)).unwrap();
        assert!((w1p_distance(&id, &shifted, 3.0).unwrap() - 0.5).abs() < 1e-12);
        let g = DiscreteMap::from_fn(mesh.clone(), |p| Vec2::new(2.0 * p.x, p.y)).unwrap();
        assert!((w1p_distance(&id, &g, 2.0).unwrap() - 2.0).abs() < 1e-12);
        let other = DiscreteMap::identity(Arc::new(build_rect_mesh(1.0, 1.0, 3).unwrap()));
        assert!(w1p_distance(&id, &other, 2.0).is_err());
    }

    fn random_map(seed_vals: &[f64]) -> DiscreteMap {
        let mesh = Arc::new(build_rect_mesh(1.0, 1.0, 3).unwrap());
        let imgs = (0..mesh.num_vertices())
            .map(|i| Vec2::new(seed_vals[2 * i], seed_vals[2 * i + 1]))
            .collect();
        DiscreteMap::new(mesh, imgs).unwrap()
    }

    proptest! {
        #[test]
        fn aniso_equals_iso_at_two(vals in prop::collection::vec(-3.0f64..3.0, 32)) {
            let m = random_map(&vals);
            let a = energy_aniso(&m, 2.0).unwrap().total;
            let b = energy_iso(&m, 2.0).unwrap().total;
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }

        #[test]
        fn aniso_scales_homogeneously(vals in prop::collection::vec(-3.0f64..3.0, 32), c in -4.0f64..4.0, p in 1.1f64..5.0) {
            let m = random_map(&vals);
            let scaled = m.with_images(m.images().iter().map(|w| *w * c).collect()).unwrap();
            let e = energy_aniso(&m, p).unwrap().total;
            let es = energy_aniso(&scaled, p).unwrap().total;
            prop_assert!((es - c.abs().powf(p) * e).abs() <= 1e-10 * es.max(1e-300));
        }

        #[test]
        fn coercivity_sandwich(vals in prop::collection::vec(-3.0f64..3.0, 32), p in 1.1f64..6.0) {
            let m = random_map(&vals);
            let (lo, hi) = coercivity_constants(p);
            let a = energy_aniso(&m, p).unwrap().total;
            let i = energy_iso(&m, p).unwrap().total;
            prop_assert!(lo * i <= a * (1.0 + 1e-12));
            prop_assert!(a <= hi * i * (1.0 + 1e-12));
        }

        #[test]
        fn energy_continuous_in_distance(vals in prop::collection::vec(-3.0f64..3.0, 32), dir in prop::collection::vec(-1.0f64..1.0, 32)) {
            let m = random_map(&vals);
            let e = energy_iso(&m, 3.0).unwrap().total;
            // Hoelder: |dE/dt| <= p |D dir|_inf E^((p-1)/p); |D dir| <= 24 on this mesh.
            for k in 1..6 {
                let t = 10f64.powi(-k);
                let pert: Vec<f64> = vals.iter().zip(&dir).map(|(v, d)| v + t * d).collect();
                let mk = random_map(&pert);
                let gap = (energy_iso(&mk, 3.0).unwrap().total - e).abs();
                prop_assert!(w1p_distance(&m, &mk, 3.0).unwrap() <= 50.0 * t);
                prop_assert!(gap <= 200.0 * t * (1.0 + e), "gap {gap} at t {t}");
            }
        }
    }
}
