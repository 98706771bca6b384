use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use monomap::diagnostics::{check_injectivity, check_monotone_fibers, check_orientation};
use monomap::functionals::{energy_aniso, energy_dirichlet, energy_iso, energy_neohookean, EnergyReport};
use monomap::geometry::{build_annulus_mesh, build_rect_mesh};
use monomap::homeomorphize::{
    approximation_sequence, build_cell_cover, homeomorphize_chain, target_sample_grid, verify_cover, ChainReport,
};
use monomap::oracle::{
    closed_form_dirichlet_energy, folded_coeffs, folded_min_image_radius, folding_radius, sample_map_on_mesh, AnnulusPair,
    ClosedFormEnergy, OracleMap,
};
use monomap::psolver::solve_map_p_dirichlet;
use monomap::{DiscreteMap, PolygonalDomain, Vec2};

use crate::config::{resolve, Command, ExperimentConfig, Fixture};
use crate::svg::{emit_svg, SvgOptions};

/// Files written and checks that failed.
#[derive(Debug, Default)]
pub struct Outcome {
    pub outputs: Vec<String>,
    pub failures: Vec<String>,
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    base: &'a Path,
    out: &'a Path,
    outcome: Outcome,
}

impl Ctx<'_> {
    fn write(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.out.join(name);
        std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        self.outcome.outputs.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }

    fn fail(&mut self, what: impl Into<String>) {
        self.outcome.failures.push(what.into());
    }

    fn path(&self, p: &Path) -> PathBuf {
        resolve(self.base, p)
    }
}

/// Input map with what the fixture knows about it.
struct Input {
    map: DiscreteMap,
    target: Option<PolygonalDomain>,
    fold_radius: Option<f64>,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Point at arclength `t` (mod 4) on the unit square boundary, counterclockwise from the origin.
fn unit_square_point(t: f64) -> Vec2 {
    let t = t.rem_euclid(4.0);
    match t {
        t if t < 1.0 => Vec2::new(t, 0.0),
        t if t < 2.0 => Vec2::new(1.0, t - 1.0),
        t if t < 3.0 => Vec2::new(3.0 - t, 1.0),
        t => Vec2::new(0.0, 4.0 - t),
    }
}

pub fn random_square_map(resolution: usize, seed: u64) -> Result<DiscreteMap> {
    let mesh = Arc::new(build_rect_mesh(1.0, 1.0, resolution)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lp = &mesh.boundary_loops()[0];
    let gaps: Vec<f64> = lp.iter().map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = gaps.iter().sum();
    let mut t = rng.random_range(0.0..4.0);
    let mut images = mesh.vertices().to_vec();
    for (&v, g) in lp.iter().zip(&gaps) {
        images[v] = unit_square_point(t);
        t += 4.0 * g / total;
    }
    Ok(DiscreteMap::new(mesh.clone(), images)?)
}

fn annulus_pair(cfg: &ExperimentConfig) -> Result<(AnnulusPair, usize, usize)> {
    match &cfg.fixture {
        Some(Fixture::Annulus { r, big_r, radial, angular, .. }) => Ok((AnnulusPair::new(*r, *big_r)?, *radial, *angular)),
        _ => Ok((AnnulusPair::new(0.5, 2.0)?, 16, 96)),
    }
}

fn load_input(ctx: &Ctx<'_>) -> Result<Input> {
    let cfg = ctx.cfg;
    let mut input = if let Some(p) = &cfg.map {
        let path = ctx.path(p);
        let map = DiscreteMap::from_json(&read(&path)?).with_context(|| format!("invalid map {}", path.display()))?;
        Input { map, target: None, fold_radius: None }
    } else {
        match *cfg.fixture.as_ref().context("config names neither a `map` nor a `fixture`")? {
            Fixture::Annulus { map, r, big_r, radial, angular } => {
                let pair = AnnulusPair::new(r, big_r)?;
                let mesh = Arc::new(build_annulus_mesh(r, big_r, radial, angular)?);
                Input {
                    map: sample_map_on_mesh(map, mesh, &pair)?,
                    target: Some(pair.target_domain(angular)?),
                    fold_radius: (map == OracleMap::Folded).then(|| folding_radius(&pair)),
                }
            }
            Fixture::Rect { width, height, resolution } => Input {
                map: DiscreteMap::identity(Arc::new(build_rect_mesh(width, height, resolution)?)),
                target: None,
                fold_radius: None,
            },
            Fixture::RandomSquare { resolution } => {
                Input { map: random_square_map(resolution, cfg.seed)?, target: None, fold_radius: None }
            }
        }
    };
    if let Some(p) = &cfg.target {
        let path = ctx.path(p);
        let target: PolygonalDomain =
            serde_json::from_str(&read(&path)?).with_context(|| format!("invalid target {}", path.display()))?;
        input.target = Some(target);
    }
    if cfg.fold_circle.is_some() {
        input.fold_radius = cfg.fold_circle;
    }
    Ok(input)
}

fn target_of(input: &Input) -> Result<PolygonalDomain> {
    match &input.target {
        Some(t) => Ok(t.clone()),
        None => PolygonalDomain::from_map_boundary(&input.map).context("cannot derive a target from the map boundary"),
    }
}

pub fn run(cmd: Command, cfg: &ExperimentConfig, base: &Path, out: &Path) -> Result<Outcome> {
    let mut ctx = Ctx { cfg, base, out, outcome: Outcome::default() };
    match cmd {
        Command::Solve => solve(&mut ctx)?,
        Command::Energy => energy(&mut ctx)?,
        Command::Cover => cover(&mut ctx)?,
        Command::Homeomorphize => homeomorphize(&mut ctx)?,
        Command::Sequence => sequence(&mut ctx)?,
        Command::Check => check(&mut ctx)?,
        Command::Oracle => oracle(&mut ctx)?,
    }
    Ok(ctx.outcome)
}

fn solve(ctx: &mut Ctx<'_>) -> Result<()> {
    let input = load_input(ctx)?;
    let all: Vec<usize> = (0..input.map.mesh().num_triangles()).collect();
    let (map, reports) = solve_map_p_dirichlet(&input.map, &all, &[], ctx.cfg.p, &ctx.cfg.solver)?;
    ctx.write_json("map.json", &map)?;
    ctx.write_json("solve_report.json", &reports)?;
    ctx.write("summary.svg", &emit_svg(&map, None, &SvgOptions { fold_radius: input.fold_radius }))?;
    Ok(())
}

#[derive(Serialize)]
struct Energies {
    aniso: EnergyReport,
    iso: EnergyReport,
    dirichlet: EnergyReport,
    /// Absent when some Jacobian is nonpositive.
    neohookean: Option<EnergyReport>,
    neohookean_error: Option<String>,
}

fn energy(ctx: &mut Ctx<'_>) -> Result<()> {
    let input = load_input(ctx)?;
    let (neohookean, neohookean_error) = match energy_neohookean(&input.map) {
        Ok(e) => (Some(e), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let report = Energies {
        aniso: energy_aniso(&input.map, ctx.cfg.p)?,
        iso: energy_iso(&input.map, ctx.cfg.p)?,
        dirichlet: energy_dirichlet(&input.map)?,
        neohookean,
        neohookean_error,
    };
    ctx.write_json("energy.json", &report)
}

fn cover(ctx: &mut Ctx<'_>) -> Result<()> {
    let input = load_input(ctx)?;
    let target = target_of(&input)?;
    let cover = build_cell_cover(&target, ctx.cfg.epsilon()?, &ctx.cfg.cover)?;
    let verification = verify_cover(&cover, &target, &target_sample_grid(&target, ctx.cfg.sample_grid));
    if !verification.pass {
        ctx.fail(format!(
            "cover verification: {} misses, multiplicity {}, max diameter {}",
            verification.coverage_misses.len(),
            verification.multiplicity,
            verification.max_diameter
        ));
    }
    #[derive(Serialize)]
    struct Out<'a> {
        cover: &'a monomap::homeomorphize::CellCover,
        verification: &'a monomap::homeomorphize::CoverVerification,
    }
    ctx.write_json("cover.json", &Out { cover: &cover, verification: &verification })
}

fn chain_failures(ctx: &mut Ctx<'_>, label: &str, r: &ChainReport) {
    if !r.jacobian_census.all_positive() {
        ctx.fail(format!(
            "{label}: {} nonpositive jacobians",
            r.jacobian_census.zero + r.jacobian_census.negative
        ));
    }
    if !r.injective {
        ctx.fail(format!("{label}: {} overlapping triangle pairs", r.overlap_count));
    }
    if r.final_sup_distance_to_input > r.sup_bound {
        ctx.fail(format!("{label}: sup distance {} above bound {}", r.final_sup_distance_to_input, r.sup_bound));
    }
}

fn homeomorphize(ctx: &mut Ctx<'_>) -> Result<()> {
    let input = load_input(ctx)?;
    let target = target_of(&input)?;
    let eps = ctx.cfg.epsilon()?;
    let cover = build_cell_cover(&target, eps, &ctx.cfg.cover)?;
    let (out, report) = homeomorphize_chain(&input.map, &target, &cover, ctx.cfg.p, &ctx.cfg.chain, None)?;
    chain_failures(ctx, &format!("epsilon {eps}"), &report);
    ctx.write_json("chain_report.json", &report)?;
    ctx.write_json("map.json", &out)?;
    let svg = emit_svg(&input.map, Some(&out), &SvgOptions { fold_radius: input.fold_radius });
    ctx.write("summary.svg", &svg)
}

fn sequence(ctx: &mut Ctx<'_>) -> Result<()> {
    let input = load_input(ctx)?;
    let target = target_of(&input)?;
    let eps = ctx.cfg.epsilon_list()?;
    let seq = approximation_sequence(&input.map, &target, ctx.cfg.p, &eps, &ctx.cfg.cover, &ctx.cfg.chain)?;
    #[derive(Serialize)]
    struct Run<'a> {
        epsilon: f64,
        w1p_distance: f64,
        map: String,
        report: &'a ChainReport,
    }
    let mut runs = Vec::new();
    for (i, run) in seq.runs.iter().enumerate() {
        let name = format!("map_{i}.json");
        ctx.write_json(&name, &run.map)?;
        chain_failures(ctx, &format!("epsilon {}", run.epsilon), &run.report);
        runs.push(Run { epsilon: run.epsilon, w1p_distance: run.w1p_distance, map: name, report: &run.report });
    }
    if !seq.nonincreasing_within_slack {
        ctx.fail("distances to the input are not nonincreasing within 10% slack");
    }
    #[derive(Serialize)]
    struct Out<'a> {
        runs: Vec<Run<'a>>,
        nonincreasing_within_slack: bool,
    }
    ctx.write_json("sequence.json", &Out { runs, nonincreasing_within_slack: seq.nonincreasing_within_slack })
}

fn check(ctx: &mut Ctx<'_>) -> Result<()> {
    let input = load_input(ctx)?;
    let target = target_of(&input)?;
    let injectivity = check_injectivity(&input.map)?;
    let fibers = check_monotone_fibers(&input.map, &target, ctx.cfg.sample_grid, None);
    if !injectivity.census.all_positive() {
        ctx.fail(format!(
            "{} zero and {} negative jacobians",
            injectivity.census.zero, injectivity.census.negative
        ));
    }
    if !injectivity.injective {
        ctx.fail(format!("{} overlapping triangle pairs", injectivity.overlap_count));
    }
    if !fibers.pass {
        ctx.fail(format!("{} disconnected fibers", fibers.failing_count()));
    }
    #[derive(Serialize)]
    struct Out<'a> {
        injectivity: &'a monomap::diagnostics::InjectivityReport,
        fibers: &'a monomap::diagnostics::MonotonicityReport,
    }
    ctx.write_json("check.json", &Out { injectivity: &injectivity, fibers: &fibers })?;
    ctx.write("summary.svg", &emit_svg(&input.map, None, &SvgOptions { fold_radius: input.fold_radius }))
}

fn oracle(ctx: &mut Ctx<'_>) -> Result<()> {
    if ctx.cfg.map.is_some() {
        bail!("`oracle` takes an annulus fixture, not a map");
    }
    let (pair, radial, angular) = annulus_pair(ctx.cfg)?;
    let (a, b) = folded_coeffs(&pair);
    let rho = folding_radius(&pair);
    #[derive(Serialize)]
    struct Out {
        r: f64,
        big_r: f64,
        a: f64,
        b: f64,
        fold_radius: f64,
        folded_min_image_radius: f64,
        nitsche_energy: f64,
        nitsche_outer_energy: f64,
        nitsche_collar_energy: f64,
        folded_energy: f64,
        nitsche_sampled_energy: f64,
        folded_sampled_energy: f64,
        folded_negative_triangles: usize,
    }
    let mesh = Arc::new(build_annulus_mesh(pair.r, pair.big_r, radial, angular)?);
    let nitsche = sample_map_on_mesh(OracleMap::Nitsche, mesh.clone(), &pair)?;
    let folded = sample_map_on_mesh(OracleMap::Folded, mesh, &pair)?;
    let out = Out {
        r: pair.r,
        big_r: pair.big_r,
        a,
        b,
        fold_radius: rho,
        folded_min_image_radius: folded_min_image_radius(&pair),
        nitsche_energy: closed_form_dirichlet_energy(&pair, ClosedFormEnergy::NitscheTotal),
        nitsche_outer_energy: closed_form_dirichlet_energy(&pair, ClosedFormEnergy::NitscheOuter),
        nitsche_collar_energy: closed_form_dirichlet_energy(&pair, ClosedFormEnergy::NitscheInner),
        folded_energy: closed_form_dirichlet_energy(&pair, ClosedFormEnergy::Folded),
        nitsche_sampled_energy: energy_dirichlet(&nitsche)?.total,
        folded_sampled_energy: energy_dirichlet(&folded)?.total,
        folded_negative_triangles: check_orientation(&folded)?.negative,
    };
    ctx.write_json("oracle.json", &out)?;
    ctx.write_json("nitsche.json", &nitsche)?;
    ctx.write_json("folded.json", &folded)?;
    ctx.write("nitsche.svg", &emit_svg(&nitsche, None, &SvgOptions::default()))?;
    ctx.write("folded.svg", &emit_svg(&folded, None, &SvgOptions { fold_radius: Some(rho) }))
}
