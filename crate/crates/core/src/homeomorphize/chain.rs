//! The replacement chain: for each cell in cover order, repair the boundary
//! trace of its pre-cell and replace the map inside by the coordinate-wise
//! p-harmonic extension.

use serde::{Deserialize, Serialize};

use super::chart::RadialChart;
use super::cover::{build_cell_cover, Cell, CellCover, CellKind, CoverConfig};
use super::precell::{compute_precell, PreCell};
use super::repair::{repair_boundary_trace, LiftProfile, FACE_SNAP_FRACTION};
use crate::diagnostics::{check_injectivity, check_monotone_fibers, OrientationCensus};
use crate::error::{Error, Result};
use crate::functionals::{energy_aniso, triangle_differentials, w1p_distance};
use crate::geometry::{point_in_loop, point_segment_distance, DiscreteMap, PolygonalDomain};
use crate::psolver::{solve_map_p_dirichlet, SolverConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub cell_index: usize,
    pub kind: CellKind,
    pub precell_size: usize,
    pub filled_triangles: usize,
    /// Anisotropic p-energy of the whole map before the step.
    pub energy_before: f64,
    /// Energy after writing the repaired boundary trace.
    pub energy_repaired: f64,
    pub energy_after: f64,
    /// `energy_repaired - energy_before`.
    pub repair_energy_delta: f64,
    /// Energy cost of solving in a straightening chart: the change from
    /// moving the repaired values into the chart plus the change from moving
    /// the solution back. Zero for convex cell regions.
    pub chart_energy_delta: f64,
    pub straightened: bool,
    pub sup_displacement: f64,
    pub boundary_repair_magnitude: f64,
    /// The trace had to be reordered along the cell boundary.
    pub boundary_projected: bool,
    /// Pre-cell triangles with nonpositive Jacobian after the replacement.
    pub rkc_violations: usize,
    /// Triangles with a vertex in the pre-cell and nonpositive Jacobian afterwards.
    pub nonpositive_nearby: usize,
    /// Candidate replacements computed before this one was kept.
    pub lift_attempts: usize,
    /// Whether the boundary repair lifted a collapsed run off the external face.
    pub boundary_lifted: bool,
    pub solver_iterations: [usize; 2],
    pub skipped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub solver: SolverConfig,
    /// Side of the sample lattice for the monotonicity precondition; 0 skips the check.
    pub monotonicity_grid: usize,
    /// Lift profiles tried in order at each step.
    pub lift_profiles: Vec<LiftProfile>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            solver: SolverConfig::default(),
            monotonicity_grid: 40,
            lift_profiles: vec![
                LiftProfile { fraction: 0.5, exponent: 0.5 },
                LiftProfile { fraction: 0.9, exponent: 0.5 },
                LiftProfile { fraction: 0.5, exponent: 1.0 },
                LiftProfile { fraction: 0.9, exponent: 1.0 },
                LiftProfile { fraction: 0.25, exponent: 0.5 },
                LiftProfile { fraction: 0.7, exponent: 0.3 },
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub epsilon: f64,
    pub p: f64,
    pub multiplicity: usize,
    pub steps: Vec<StepRecord>,
    pub cells_processed: usize,
    pub cells_skipped: usize,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub final_sup_distance_to_input: f64,
    pub total_repair_magnitude: f64,
    pub total_repair_energy_delta: f64,
    pub total_chart_energy_delta: f64,
    /// `multiplicity * epsilon + total_repair_magnitude`.
    pub sup_bound: f64,
    pub rkc_violation_steps: usize,
    pub jacobian_census: OrientationCensus,
    pub injective: bool,
    pub overlap_count: usize,
}

impl ChainReport {
    /// Steps whose energy rose by more than the repair and chart deltas plus `tol`.
    pub fn energy_violations(&self, tol: f64) -> Vec<usize> {
        self.steps
            .iter()
            .filter(|s| !s.skipped && s.energy_after > s.energy_before + s.repair_energy_delta + s.chart_energy_delta + tol)
            .map(|s| s.cell_index)
            .collect()
    }
}

/// Repairs the pre-cell boundary trace and replaces the map inside the
/// pre-cell by its coordinate-wise p-harmonic extension. Only pre-cell
/// vertices change. The lift profiles of `config` are tried in order until
/// one leaves every triangle touching the pre-cell with positive Jacobian;
/// failing that, the attempt with the fewest nonpositive triangles is kept.
pub fn replace_on_precell(
    map: &DiscreteMap,
    precell: &PreCell,
    cell: &Cell,
    p: f64,
    epsilon: f64,
    config: &ChainConfig,
) -> Result<(DiscreteMap, StepRecord)> {
    let energy_before = energy_aniso(map, p)?.total;
    if precell.is_empty() || trace_on_face(map, precell, cell) {
        return Ok((
            map.clone(),
            StepRecord {
                cell_index: 0,
                kind: cell.kind,
                precell_size: precell.triangles.len(),
                filled_triangles: 0,
                energy_before,
                energy_repaired: energy_before,
                energy_after: energy_before,
                repair_energy_delta: 0.0,
                chart_energy_delta: 0.0,
                straightened: false,
                sup_displacement: 0.0,
                boundary_repair_magnitude: 0.0,
                boundary_projected: false,
                rkc_violations: 0,
                nonpositive_nearby: 0,
                lift_attempts: 0,
                boundary_lifted: false,
                solver_iterations: [0, 0],
                skipped: true,
            },
        ));
    }
    let mesh = map.mesh();
    let mut touched = vec![false; mesh.num_triangles()];
    for v in mesh.region_vertices(&precell.triangles) {
        for &t in mesh.vertex_triangles(v) {
            touched[t] = true;
        }
    }
    let touched: Vec<usize> = (0..touched.len()).filter(|&t| touched[t]).collect();

    let profiles = if config.lift_profiles.is_empty() { vec![LiftProfile::default()] } else { config.lift_profiles.clone() };
    let mut best: Option<(DiscreteMap, StepRecord)> = None;
    let mut attempts = 0;
    // Straightened solves first; a direct solve is the last resort since a
    // collar thinner than the chart's kinks can fold on the way back.
    let candidates = profiles.iter().map(|pr| (pr, true)).chain(profiles.iter().map(|pr| (pr, false)));
    let (mut settled_chart, mut settled_direct) = (false, false);
    for (profile, straighten) in candidates {
        if (straighten && settled_chart) || (!straighten && settled_direct) {
            continue;
        }
        attempts += 1;
        let (out, mut record) = replace_with_profile(map, precell, cell, p, epsilon, &config.solver, profile, straighten, energy_before)?;
        let diffs = triangle_differentials(&out)?;
        // Triangles the step left alone keep whatever Jacobian they had.
        let moved = |t: usize| mesh.triangles()[t].iter().any(|&v| out.image(v) != map.image(v));
        record.nonpositive_nearby = touched.iter().filter(|&&t| moved(t) && !(diffs[t].jacobian > 0.0)).count();
        // Without a lift the profile is irrelevant; without a chart so is straightening.
        if !record.boundary_lifted {
            if straighten { settled_chart = true } else { settled_direct = true }
        }
        if !record.straightened {
            settled_chart = true;
            settled_direct |= straighten;
        }
        let done = record.nonpositive_nearby == 0;
        if best.as_ref().is_none_or(|(_, r)| record.nonpositive_nearby < r.nonpositive_nearby) {
            best = Some((out, record));
        }
        if done {
            break;
        }
    }
    let (out, mut record) = best.expect("at least one lift profile");
    record.lift_attempts = attempts;
    Ok((out, record))
}

#[allow(clippy::too_many_arguments)]
fn replace_with_profile(
    map: &DiscreteMap,
    precell: &PreCell,
    cell: &Cell,
    p: f64,
    epsilon: f64,
    config: &SolverConfig,
    profile: &LiftProfile,
    straighten: bool,
    energy_before: f64,
) -> Result<(DiscreteMap, StepRecord)> {
    let mesh = map.mesh();
    let lp = &precell.boundary_loop;
    let values: Vec<_> = lp.iter().map(|&v| map.image(v)).collect();
    let source: Vec<_> = lp.iter().map(|&v| mesh.vertices()[v]).collect();
    let pinned: Vec<bool> = lp.iter().map(|&v| mesh.is_boundary_vertex(v)).collect();
    let repair = repair_boundary_trace(&values, &source, &pinned, cell, epsilon, profile)?;
    let mut images = map.images().to_vec();
    for (&v, &w) in lp.iter().zip(&repair.values) {
        images[v] = w;
    }
    let repaired = map.with_images(images)?;
    let energy_repaired = energy_aniso(&repaired, p)?.total;

    let chart = if straighten { RadialChart::for_region(&cell.region, cell.square.side()) } else { None };
    let (out, reports, chart_energy_delta) = match &chart {
        None => {
            let (out, reports) = solve_map_p_dirichlet(&repaired, &precell.triangles, &[], p, config)?;
            (out, reports, 0.0)
        }
        Some(chart) => {
            let mut images = repaired.images().to_vec();
            for v in mesh.region_vertices(&precell.triangles) {
                images[v] = chart.to_chart(images[v]);
            }
            let lifted = map.with_images(images)?;
            let energy_lifted = energy_aniso(&lifted, p)?.total;
            let (solved, reports) = solve_map_p_dirichlet(&lifted, &precell.triangles, &[], p, config)?;
            let energy_solved = energy_aniso(&solved, p)?.total;
            // Only interior vertices come back; the loop keeps its repaired values.
            let mut images = repaired.images().to_vec();
            for &v in &precell.interior_vertices {
                images[v] = chart.from_chart(solved.image(v));
            }
            let out = map.with_images(images)?;
            let energy_out = energy_aniso(&out, p)?.total;
            (out, reports, (energy_lifted - energy_repaired) + (energy_out - energy_solved))
        }
    };
    let energy_after = energy_aniso(&out, p)?.total;

    let diffs = triangle_differentials(&out)?;
    let rkc_violations = precell.triangles.iter().filter(|&&t| !(diffs[t].jacobian > 0.0)).count();
    let sup_displacement = out.sup_distance(map)?;
    Ok((
        out,
        StepRecord {
            cell_index: 0,
            kind: cell.kind,
            precell_size: precell.triangles.len(),
            filled_triangles: precell.filled_triangles,
            energy_before,
            energy_repaired,
            energy_after,
            repair_energy_delta: energy_repaired - energy_before,
            chart_energy_delta,
            straightened: chart.is_some(),
            sup_displacement,
            boundary_repair_magnitude: repair.magnitude,
            boundary_projected: repair.projected,
            rkc_violations,
            nonpositive_nearby: 0,
            lift_attempts: 0,
            boundary_lifted: repair.lifted,
            solver_iterations: [reports[0].iterations, reports[1].iterations],
            skipped: false,
        },
    ))
}

/// Every loop value lies on the external face: the map squeezes the whole
/// pre-cell onto the target boundary and the trace carries no room for a
/// homeomorphic repair inside this cell. Overlapping cells take it over.
fn trace_on_face(map: &DiscreteMap, precell: &PreCell, cell: &Cell) -> bool {
    let Some(face) = cell.external_face.as_ref().filter(|f| f.len() >= 2) else {
        return false;
    };
    let tol = 1e-9 * cell.square.side();
    let reach = FACE_SNAP_FRACTION * cell.square.side();
    precell.boundary_loop.iter().all(|&v| {
        let w = map.image(v);
        let d = face.windows(2).map(|s| point_segment_distance(w, s[0], s[1]).0).fold(f64::INFINITY, f64::min);
        d <= tol || (d <= reach && !point_in_loop(w, &cell.region))
    })
}

pub type StepObserver<'a> = dyn FnMut(usize, &DiscreteMap, &StepRecord) + 'a;

/// Runs one pass of pre-cell replacements over the cover, in cover order.
/// The input must pass the fiber check; `observer` sees the map after each step.
pub fn homeomorphize_chain(
    map: &DiscreteMap,
    target: &PolygonalDomain,
    cover: &CellCover,
    p: f64,
    config: &ChainConfig,
    mut observer: Option<&mut StepObserver<'_>>,
) -> Result<(DiscreteMap, ChainReport)> {
    if config.monotonicity_grid > 0 {
        let mono = check_monotone_fibers(map, target, config.monotonicity_grid, None);
        if !mono.pass {
            return Err(Error::NotMonotone { report: Box::new(mono) });
        }
    }
    let initial_energy = energy_aniso(map, p)?.total;
    let mut current = map.clone();
    let mut steps = Vec::with_capacity(cover.cells.len());

    let summarize = |current: &DiscreteMap, steps: Vec<StepRecord>| -> Result<ChainReport> {
        let injectivity = check_injectivity(current)?;
        let total_repair_magnitude = steps.iter().map(|s| s.boundary_repair_magnitude).sum();
        Ok(ChainReport {
            epsilon: cover.epsilon,
            p,
            multiplicity: cover.multiplicity,
            cells_processed: steps.iter().filter(|s| !s.skipped).count(),
            cells_skipped: steps.iter().filter(|s| s.skipped).count(),
            rkc_violation_steps: steps.iter().filter(|s| s.rkc_violations > 0).count(),
            total_repair_energy_delta: steps.iter().map(|s| s.repair_energy_delta).sum(),
            total_chart_energy_delta: steps.iter().map(|s| s.chart_energy_delta).sum(),
            total_repair_magnitude,
            sup_bound: cover.multiplicity as f64 * cover.epsilon + total_repair_magnitude,
            steps,
            initial_energy,
            final_energy: energy_aniso(current, p)?.total,
            final_sup_distance_to_input: current.sup_distance(map)?,
            injective: injectivity.injective,
            overlap_count: injectivity.overlap_count,
            jacobian_census: injectivity.census,
        })
    };

    for (i, cell) in cover.cells.iter().enumerate() {
        let precell = compute_precell(&current, cell, target);
        match replace_on_precell(&current, &precell, cell, p, cover.epsilon, config) {
            Ok((next, mut record)) => {
                record.cell_index = i;
                current = next;
                if let Some(obs) = observer.as_mut() {
                    obs(i, &current, &record);
                }
                steps.push(record);
            }
            Err(e) => {
                let step = steps.len();
                let partial = summarize(&current, steps)?;
                return Err(Error::ChainAborted {
                    step,
                    cell: i,
                    source: Box::new(e),
                    partial: Box::new(partial),
                });
            }
        }
    }
    let report = summarize(&current, steps)?;
    Ok((current, report))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SequenceRun {
    pub epsilon: f64,
    pub map: DiscreteMap,
    pub report: ChainReport,
    /// Sup-plus-seminorm distance to the input map.
    pub w1p_distance: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SequenceReport {
    pub runs: Vec<SequenceRun>,
    /// Each distance is at most 1.1 times the previous one.
    pub nonincreasing_within_slack: bool,
}

/// One chain run per epsilon, each starting from the input map.
pub fn approximation_sequence(
    map: &DiscreteMap,
    target: &PolygonalDomain,
    p: f64,
    epsilons: &[f64],
    cover_config: &CoverConfig,
    config: &ChainConfig,
) -> Result<SequenceReport> {
    if epsilons.is_empty() {
        return Err(Error::invalid("approximation sequence needs at least one epsilon"));
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::invalid("epsilons must be strictly decreasing"));
    }
    let mut runs = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let cover = build_cell_cover(target, eps, cover_config)?;
        let (out, report) = homeomorphize_chain(map, target, &cover, p, config, None)?;
        let w1p_distance = w1p_distance(&out, map, p)?;
        runs.push(SequenceRun {
            epsilon: eps,
            map: out,
            report,
            w1p_distance,
        });
    }
    let nonincreasing_within_slack = runs.windows(2).all(|w| w[1].w1p_distance <= 1.1 * w[0].w1p_distance);
    Ok(SequenceReport {
        runs,
        nonincreasing_within_slack,
    })
}


#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::geometry::{build_annulus_mesh, build_rect_mesh, Vec2};
    use crate::homeomorphize::cover::Square;
    use crate::oracle::{sample_map_on_mesh, AnnulusPair, OracleMap};

    fn internal_cell(center: Vec2, hw: f64) -> Cell {
        let square = Square { center, half_width: hw };
        Cell {
            square,
            kind: CellKind::Internal,
            external_face: None,
            region: square.corners().to_vec(),
            row: 0,
            col: 0,
        }
    }

    fn unit_square() -> PolygonalDomain {
        PolygonalDomain::rectangle(Vec2::ZERO, Vec2::new(1.0, 1.0)).unwrap()
    }

    #[test]
    fn identity_chain_is_a_fixed_point() {
        let mesh = Arc::new(build_rect_mesh(1.0, 1.0, 12).unwrap());
        let id = DiscreteMap::identity(mesh);
        let cover = build_cell_cover(&unit_square(), 0.5, &CoverConfig::default()).unwrap();
        let (out, rep) = homeomorphize_chain(&id, &unit_square(), &cover, 2.0, &ChainConfig::default(), None).unwrap();
        assert!(out.sup_distance(&id).unwrap() < 1e-8);
        assert!(rep.injective);
        assert!((rep.final_energy - rep.initial_energy).abs() < 1e-8);
        assert!(rep.energy_violations(1e-9).is_empty());
    }

    #[test]
    fn replacement_is_local_and_lowers_energy() {
        let mesh = Arc::new(build_rect_mesh(1.0, 1.0, 16).unwrap());
        let map = DiscreteMap::from_fn(mesh.clone(), |z| Vec2::new(z.x + 0.1 * z.x * z.y * (1.0 - z.x), z.y)).unwrap();
        let cell = internal_cell(Vec2::new(0.5, 0.5), 0.2);
        let precell = compute_precell(&map, &cell, &unit_square());
        let (out, rec) = replace_on_precell(&map, &precell, &cell, 2.0, 0.6, &ChainConfig::default()).unwrap();
        assert!(!rec.skipped);
        assert_eq!(rec.rkc_violations, 0);
        assert!(rec.energy_after <= rec.energy_before + rec.repair_energy_delta + 1e-10);
        let touched = mesh.region_vertices(&precell.triangles);
        for v in 0..mesh.num_vertices() {
            if touched.binary_search(&v).is_err() {
                assert_eq!(out.image(v), map.image(v));
            }
        }
    }

    #[test]
    fn collapsed_precell_is_spread_over_the_cell() {
        let mesh = Arc::new(build_rect_mesh(1.0, 1.0, 8).unwrap());
        let c = Vec2::new(0.5, 0.5);
        let map = DiscreteMap::from_fn(mesh.clone(), |_| c).unwrap();
        let cell = internal_cell(c, 0.1);
        let precell = compute_precell(&map, &cell, &unit_square());
        assert_eq!(precell.triangles.len(), mesh.num_triangles());
        let (out, _) = replace_on_precell(&map, &precell, &cell, 2.0, 0.3, &ChainConfig::default()).unwrap();
        // Only the two mesh corner triangles, whose vertices all land on one
        // side of the square, may degenerate.
        let census = check_injectivity(&out).unwrap().census;
        assert_eq!(census.negative, 0);
        for &t in &census.zero_triangles {
            assert!(mesh.triangles()[t].iter().all(|&v| mesh.is_boundary_vertex(v)));
        }
        for &w in out.images() {
            assert!(cell.square.contains(w, 1e-12));
        }
    }

    #[test]
    fn folded_input_is_refused() {
        let pair = AnnulusPair::new(0.5, 2.0).unwrap();
        let mesh = Arc::new(build_annulus_mesh(0.5, 2.0, 8, 48).unwrap());
        let folded = sample_map_on_mesh(OracleMap::Folded, mesh, &pair).unwrap();
        let target = pair.target_domain(96).unwrap();
        let cover = build_cell_cover(&target, 0.6, &CoverConfig::default()).unwrap();
        let err = homeomorphize_chain(&folded, &target, &cover, 2.0, &ChainConfig::default(), None).unwrap_err();
        assert!(matches!(err, Error::NotMonotone { .. }), "{err}");
    }

    #[test]
    fn sequence_rejects_increasing_epsilons() {
        let mesh = Arc::new(build_rect_mesh(1.0, 1.0, 4).unwrap());
        let id = DiscreteMap::identity(mesh);
        let r = approximation_sequence(&id, &unit_square(), 2.0, &[0.3, 0.6], &CoverConfig::default(), &ChainConfig::default());
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }
}
