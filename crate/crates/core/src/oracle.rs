//! Closed-form annulus maps: the critical Nitsche map, which collapses the
//! inner collar onto the unit circle, and the harmonic map `A z + B / conj(z)`
//! with the same boundary data, which folds.
//!
//! Complex expressions are expanded into real 2-vectors. For `z = rho e^{it}`
//! both maps are radial stretches `z -> f(rho) e^{it}`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DiscreteMap, PolygonalDomain, TriangleMesh, Vec2};

/// Source annulus `r < |z| < R` and target annulus `1 < |w| < (R + 1/R) / 2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnulusPair {
    pub r: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
}

impl AnnulusPair {
    pub fn new(r: f64, big_r: f64) -> Result<Self> {
        if !(r > 0.0 && r < 1.0 && big_r > 1.0 && big_r.is_finite()) {
            return Err(Error::invalid(format!("annulus pair needs 0 < r < 1 < R, got r = {r}, R = {big_r}")));
        }
        Ok(AnnulusPair { r, big_r })
    }

    pub fn target_inner(&self) -> f64 {
        1.0
    }

    pub fn target_outer(&self) -> f64 {
        0.5 * (self.big_r + 1.0 / self.big_r)
    }

    /// Polygonal target annulus with both circles circumscribed. The unit
    /// circle, onto which the Nitsche map squeezes its collar, then sits just
    /// inside the hole polygon rather than inside the target.
    pub fn target_domain(&self, segments: usize) -> Result<PolygonalDomain> {
        if segments < 3 {
            return Err(Error::invalid("annulus polygon needs at least three segments"));
        }
        let stretch = 1.0 / (PI / segments as f64).cos();
        let ring = |r: f64| -> Vec<Vec2> {
            (0..segments)
                .map(|j| Vec2::from_polar(r * stretch, 2.0 * PI * j as f64 / segments as f64))
                .collect()
        };
        PolygonalDomain::new(ring(self.target_outer()), vec![ring(self.target_inner())])
    }

    fn check(&self, z: Vec2, what: &str) -> Result<f64> {
        let rho = z.norm();
        // Relative slack absorbs rounding in mesh vertices placed on the circles.
        let slack = 1e-12;
        if rho < self.r * (1.0 - slack) || rho > self.big_r * (1.0 + slack) || !rho.is_finite() {
            return Err(Error::Domain { what: what.into(), x: z.x, y: z.y });
        }
        Ok(rho)
    }
}

/// `z / |z|` for `|z| <= 1`, `(z + 1/conj(z)) / 2` for `|z| > 1`.
pub fn nitsche_map(pair: &AnnulusPair, z: Vec2) -> Result<Vec2> {
    let rho = pair.check(z, "the Nitsche map")?;
    let scale = if rho <= 1.0 { 1.0 / rho } else { 0.5 * (1.0 + 1.0 / (rho * rho)) };
    Ok(z * scale)
}

/// Coefficients `(A, B)` of the harmonic map `A z + B / conj(z)` taking the
/// inner circle to the unit circle and the outer one to the outer target circle.
pub fn folded_coeffs(pair: &AnnulusPair) -> (f64, f64) {
    let (r, rr) = (pair.r, pair.big_r);
    let den = 2.0 * (rr * rr - r * r);
    let a = (rr * rr - 2.0 * r + 1.0) / den;
    let b = r * (2.0 * rr * rr - r * rr * rr - r) / den;
    (a, b)
}

pub fn folded_harmonic(pair: &AnnulusPair, z: Vec2) -> Result<Vec2> {
    let rho = pair.check(z, "the folded harmonic map")?;
    let (a, b) = folded_coeffs(pair);
    // B / conj(z) = B z / |z|^2
    Ok(z * (a + b / (rho * rho)))
}

/// Radius where the Jacobian `A^2 - B^2 / |z|^4` vanishes.
pub fn folding_radius(pair: &AnnulusPair) -> f64 {
    let (a, b) = folded_coeffs(pair);
    (b / a).sqrt()
}

/// Jacobian of `A z + B / conj(z)` at radius `rho`.
pub fn folded_jacobian(pair: &AnnulusPair, rho: f64) -> f64 {
    let (a, b) = folded_coeffs(pair);
    a * a - b * b / rho.powi(4)
}

/// Smallest modulus of `A z + B / conj(z)` on the source annulus.
pub fn folded_min_image_radius(pair: &AnnulusPair) -> f64 {
    let rho = folding_radius(pair).clamp(pair.r, pair.big_r);
    let (a, b) = folded_coeffs(pair);
    a * rho + b / rho
}

/// Dirichlet energy of `A z + B / conj(z)` on `r0 < |z| < r1`, from
/// `|D|^2 = 2 (A^2 + B^2 / |z|^4)` integrated in polar coordinates.
pub fn harmonic_annulus_energy(a: f64, b: f64, r0: f64, r1: f64) -> f64 {
    2.0 * PI * (a * a * (r1 * r1 - r0 * r0) + b * b * (1.0 / (r0 * r0) - 1.0 / (r1 * r1)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClosedFormEnergy {
    /// Nitsche map on `1 < |z| < R`.
    NitscheOuter,
    /// Nitsche map on the collapsed collar `r < |z| < 1`.
    NitscheInner,
    NitscheTotal,
    Folded,
}

pub fn closed_form_dirichlet_energy(pair: &AnnulusPair, which: ClosedFormEnergy) -> f64 {
    let outer = || harmonic_annulus_energy(0.5, 0.5, 1.0, pair.big_r);
    // |D(z/|z|)|^2 = 1/|z|^2
    let inner = || 2.0 * PI * (1.0 / pair.r).ln();
    match which {
        ClosedFormEnergy::NitscheOuter => outer(),
        ClosedFormEnergy::NitscheInner => inner(),
        ClosedFormEnergy::NitscheTotal => outer() + inner(),
        ClosedFormEnergy::Folded => {
            let (a, b) = folded_coeffs(pair);
            harmonic_annulus_energy(a, b, pair.r, pair.big_r)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMap {
    Identity,
    Nitsche,
    Folded,
}

impl OracleMap {
    pub fn eval(self, pair: &AnnulusPair, z: Vec2) -> Result<Vec2> {
        match self {
            OracleMap::Identity => pair.check(z, "the identity").map(|_| z),
            OracleMap::Nitsche => nitsche_map(pair, z),
            OracleMap::Folded => folded_harmonic(pair, z),
        }
    }
}

/// Evaluates an oracle map at every mesh vertex.
pub fn sample_map_on_mesh(which: OracleMap, mesh: Arc<TriangleMesh>, pair: &AnnulusPair) -> Result<DiscreteMap> {
    let mut images = Vec::with_capacity(mesh.num_vertices());
    for (i, &z) in mesh.vertices().iter().enumerate() {
        images.push(which.eval(pair, z).map_err(|e| match e {
            Error::Domain { what, x, y } => Error::Domain {
                what: format!("{what} (vertex {i})"),
                x,
                y,
            },
            e => e,
        })?);
    }
    DiscreteMap::new(mesh, images)
}
