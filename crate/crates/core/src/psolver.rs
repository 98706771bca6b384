//! Dirichlet solver for the discrete p-energy `sum area * |grad phi|^p` of a
//! scalar piecewise-linear function, and its coordinate-wise lift to maps.
//!
//! The minimizer is found by damped Newton iteration on the regularized
//! density `(|g|^2 + delta^2)^(p/2)`. Each step factors the sparse Hessian
//! (shifted when it is not positive definite) and backtracks until both the
//! regularized and the unregularized energy decrease, so the reported trace is
//! monotone. For `p = 2` the problem is linear and is solved directly.

use nalgebra::DMatrix;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::barycentric_gradients;
use crate::geometry::{DiscreteMap, TriangleMesh, Vec2};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Stop once the gradient norm falls below this fraction of its initial value.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Regularization used for gradients and Hessians only.
    pub delta: f64,
    /// Solve the `p = 2` case as one sparse linear system.
    pub fast_path_p2: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: 1e-10,
            max_iterations: 500,
            delta: 1e-10,
            fast_path_p2: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Gradient norm reached `tolerance` times its initial value and the last
    /// step was below `tolerance` relative to the iterate.
    GradientTolerance,
    /// Relative energy decrease stayed below `1e-14` for three steps, or no
    /// step could decrease the energy at floating-point resolution.
    EnergyStagnation,
    /// The linear system of the `p = 2` case was solved directly.
    DirectSolve,
    /// Nothing to solve.
    NoFreeVertices,
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PSolveReport {
    pub iterations: usize,
    /// Unregularized energy of the active triangles, starting with the initial
    /// guess; nonincreasing up to rounding.
    pub energy_trace: Vec<f64>,
    pub initial_gradient_norm: f64,
    pub final_gradient_norm: f64,
    pub converged: bool,
    pub stop_reason: StopReason,
}

/// One scalar Dirichlet problem: minimize over the values at `free` the
/// p-energy of `triangles`, all other vertices held at `values`.
#[derive(Clone, Copy, Debug)]
pub struct PSolveProblem<'a> {
    pub mesh: &'a TriangleMesh,
    pub triangles: &'a [usize],
    pub free: &'a [usize],
    /// Full-length vertex values; entries at free vertices are ignored.
    pub values: &'a [f64],
    pub p: f64,
}

struct Element {
    area: f64,
    grads: [Vec2; 3],
    verts: [usize; 3],
    /// Position in the unknown vector, if free.
    slots: [Option<usize>; 3],
}

struct Assembled<'a> {
    problem: PSolveProblem<'a>,
    elements: Vec<Element>,
    n: usize,
}

impl<'a> Assembled<'a> {
    fn new(problem: PSolveProblem<'a>) -> Result<Self> {
        let mesh = problem.mesh;
        if !(problem.p.is_finite() && problem.p > 1.0) {
            return Err(Error::invalid(format!("exponent p must exceed 1, got {}", problem.p)));
        }
        if problem.values.len() != mesh.num_vertices() {
            return Err(Error::invalid("problem values must have one entry per mesh vertex"));
        }
        let mut slot = vec![None; mesh.num_vertices()];
        for (i, &v) in problem.free.iter().enumerate() {
            if v >= mesh.num_vertices() {
                return Err(Error::invalid(format!("free vertex {v} out of range")));
            }
            if slot[v].replace(i).is_some() {
                return Err(Error::invalid(format!("free vertex {v} listed twice")));
            }
        }
        let verts = mesh.vertices();
        let mut touched = vec![false; mesh.num_vertices()];
        let mut elements = Vec::with_capacity(problem.triangles.len());
        for &t in problem.triangles {
            let tri = *mesh
                .triangles()
                .get(t)
                .ok_or_else(|| Error::invalid(format!("triangle {t} out of range")))?;
            let (grads, area) = barycentric_gradients([verts[tri[0]], verts[tri[1]], verts[tri[2]]])
                .ok_or(Error::DegenerateTriangle { triangle: t, area: mesh.area(t) })?;
            for &v in &tri {
                touched[v] = true;
                if slot[v].is_none() && !problem.values[v].is_finite() {
                    return Err(Error::invalid(format!("fixed value at vertex {v} is not finite")));
                }
            }
            elements.push(Element {
                area,
                grads,
                verts: tri,
                slots: [slot[tri[0]], slot[tri[1]], slot[tri[2]]],
            });
        }
        if let Some(&v) = problem.free.iter().find(|&&v| !touched[v]) {
            return Err(Error::invalid(format!("free vertex {v} touches no active triangle")));
        }
        Ok(Assembled {
            problem,
            n: problem.free.len(),
            elements,
        })
    }

    fn local_gradient(&self, e: &Element, x: &[f64]) -> Vec2 {
        let mut g = Vec2::ZERO;
        for k in 0..3 {
            let val = match e.slots[k] {
                Some(s) => x[s],
                None => self.problem.values[e.verts[k]],
            };
            g += e.grads[k] * val;
        }
        g
    }

    fn energy(&self, x: &[f64], delta: f64) -> f64 {
        let hp = 0.5 * self.problem.p;
        let d2 = delta * delta;
        self.elements
            .iter()
            .map(|e| e.area * (self.local_gradient(e, x).norm_sq() + d2).powf(hp))
            .sum()
    }

    fn gradient(&self, x: &[f64], delta: f64) -> Vec<f64> {
        let p = self.problem.p;
        let d2 = delta * delta;
        let mut out = vec![0.0; self.n];
        for e in &self.elements {
            let g = self.local_gradient(e, x);
            let s = g.norm_sq() + d2;
            if s == 0.0 {
                continue;
            }
            let c = e.area * p * s.powf(0.5 * p - 1.0);
            for k in 0..3 {
                if let Some(i) = e.slots[k] {
                    out[i] += c * g.dot(e.grads[k]);
                }
            }
        }
        out
    }

    fn hessian(&self, x: &[f64], delta: f64) -> CooMatrix<f64> {
        let p = self.problem.p;
        let d2 = delta * delta;
        let mut coo = CooMatrix::new(self.n, self.n);
        for e in &self.elements {
            let g = self.local_gradient(e, x);
            let s = g.norm_sq() + d2;
            if s == 0.0 {
                continue;
            }
            let c1 = e.area * p * s.powf(0.5 * p - 1.0);
            let c2 = e.area * p * (p - 2.0) * s.powf(0.5 * p - 2.0);
            for a in 0..3 {
                let Some(i) = e.slots[a] else { continue };
                for b in 0..3 {
                    let Some(j) = e.slots[b] else { continue };
                    let h = c1 * e.grads[a].dot(e.grads[b]) + c2 * g.dot(e.grads[a]) * g.dot(e.grads[b]);
                    coo.push(i, j, h);
                }
            }
        }
        coo
    }

    /// Solves `(H + shift * D) d = -grad`, raising the shift until the
    /// factorization succeeds.
    fn newton_direction(&self, x: &[f64], grad: &[f64], delta: f64) -> Option<Vec<f64>> {
        let coo = self.hessian(x, delta);
        let csc = CscMatrix::from(&coo);
        let diag: Vec<f64> = (0..self.n)
            .map(|i| csc.get_entry(i, i).map(|e| e.into_value()).unwrap_or(0.0))
            .collect();
        let max_diag = diag.iter().cloned().fold(0.0, f64::max);
        let rhs = DMatrix::from_iterator(self.n, 1, grad.iter().map(|g| -g));
        if let Ok(chol) = CscCholesky::factor(&csc) {
            let d = chol.solve(&rhs);
            if d.iter().all(|v| v.is_finite()) {
                return Some(d.iter().copied().collect());
            }
        }
        let floor = max_diag.max(f64::MIN_POSITIVE) * 1e-12;
        let mut shift = 1e-10;
        for _ in 0..12 {
            let mut shifted = coo.clone();
            for (i, &d) in diag.iter().enumerate() {
                shifted.push(i, i, shift * d.max(floor) + floor);
            }
            if let Ok(chol) = CscCholesky::factor(&CscMatrix::from(&shifted)) {
                let d = chol.solve(&rhs);
                if d.iter().all(|v| v.is_finite()) {
                    return Some(d.iter().copied().collect());
                }
            }
            shift *= 100.0;
        }
        None
    }

    /// Jacobi-scaled steepest descent.
    fn fallback_direction(&self, x: &[f64], grad: &[f64], delta: f64) -> Vec<f64> {
        let p = self.problem.p;
        let d2 = delta * delta;
        let mut diag = vec![0.0; self.n];
        for e in &self.elements {
            let g = self.local_gradient(e, x);
            let s = g.norm_sq() + d2;
            if s == 0.0 {
                continue;
            }
            let c = e.area * p * s.powf(0.5 * p - 1.0) * (p - 1.0).max(1.0);
            for k in 0..3 {
                if let Some(i) = e.slots[k] {
                    diag[i] += c * e.grads[k].norm_sq();
                }
            }
        }
        grad.iter()
            .zip(&diag)
            .map(|(g, d)| if *d > 0.0 { -g / d } else { -g })
            .collect()
    }

}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl PSolveProblem<'_> {
    /// Energy of the active triangles with the free vertices set to `free_values`.
    pub fn energy(&self, free_values: &[f64], delta: f64) -> Result<f64> {
        let asm = Assembled::new(*self)?;
        Ok(asm.energy(free_values, delta))
    }

    /// Analytic gradient of [`PSolveProblem::energy`] with respect to the free values.
    pub fn gradient(&self, free_values: &[f64], delta: f64) -> Result<Vec<f64>> {
        let asm = Assembled::new(*self)?;
        Ok(asm.gradient(free_values, delta))
    }
}

/// Minimizes the discrete p-energy over the free values, starting from
/// `initial_guess` (one value per free vertex). Returns the free values.
pub fn solve_scalar_p_dirichlet(
    problem: PSolveProblem<'_>,
    initial_guess: &[f64],
    config: &SolverConfig,
) -> Result<(Vec<f64>, PSolveReport)> {
    if !(config.tolerance > 0.0) || !(config.delta >= 0.0) {
        return Err(Error::invalid("solver tolerance must be positive and delta nonnegative"));
    }
    let asm = Assembled::new(problem)?;
    if initial_guess.len() != asm.n {
        return Err(Error::invalid(format!(
            "initial guess has {} values for {} free vertices",
            initial_guess.len(),
            asm.n
        )));
    }
    if initial_guess.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("initial guess is not finite"));
    }
    let mut x = initial_guess.to_vec();
    let e0 = asm.energy(&x, 0.0);
    if asm.n == 0 {
        return Ok((
            x,
            PSolveReport {
                iterations: 0,
                energy_trace: vec![e0],
                initial_gradient_norm: 0.0,
                final_gradient_norm: 0.0,
                converged: true,
                stop_reason: StopReason::NoFreeVertices,
            },
        ));
    }
    if config.fast_path_p2 && problem.p == 2.0 {
        return Ok(solve_quadratic(&asm, x, e0));
    }

    // Continuation in delta: a large regularization first keeps Newton steps
    // useful where the gradient nearly vanishes (p < 2) or the Hessian
    // degenerates (p > 2); each stage warm-starts the next.
    let area: f64 = asm.elements.iter().map(|e| e.area).sum();
    let mean_grad = (e0 / area.max(f64::MIN_POSITIVE)).powf(1.0 / problem.p);
    let mut schedule = Vec::new();
    let mut d = 0.1 * mean_grad;
    while d > 10.0 * config.delta && schedule.len() < 12 {
        schedule.push(d);
        d *= 0.01;
    }
    let mut trace = vec![e0];
    let mut e_plain = e0;
    let mut iterations = 0;
    // The loose stages get at most half of the iteration budget.
    let loose_budget = config.max_iterations / 2;
    for &delta in &schedule {
        let budget = 40.min(loose_budget - iterations);
        let stage = newton_stage(&asm, &mut x, &mut e_plain, &mut trace, delta, 1e-3, budget);
        iterations += stage.iterations;
    }
    let delta = config.delta;
    let g0 = norm(&asm.gradient(initial_guess, delta));
    let budget = config.max_iterations - iterations;
    let stage = newton_stage_from(&asm, &mut x, &mut e_plain, &mut trace, delta, config.tolerance, budget, g0);
    iterations += stage.iterations;
    let (stop, gnorm) = (stage.stop, stage.final_gradient_norm);
    let report = PSolveReport {
        iterations,
        energy_trace: trace,
        initial_gradient_norm: g0,
        final_gradient_norm: gnorm,
        converged: stop != StopReason::MaxIterations,
        stop_reason: stop,
    };
    if report.converged {
        Ok((x, report))
    } else {
        Err(Error::NotConverged { report: Box::new(report) })
    }
}

struct Stage {
    iterations: usize,
    stop: StopReason,
    final_gradient_norm: f64,
}

fn newton_stage(
    asm: &Assembled<'_>,
    x: &mut Vec<f64>,
    e_plain: &mut f64,
    trace: &mut Vec<f64>,
    delta: f64,
    tolerance: f64,
    max_iterations: usize,
) -> Stage {
    let g0 = norm(&asm.gradient(x, delta));
    newton_stage_from(asm, x, e_plain, trace, delta, tolerance, max_iterations, g0)
}

/// Damped Newton at fixed `delta` until the gradient norm falls below
/// `tolerance * g0` with a small last step, the energy stagnates, or the
/// iteration budget runs out. Appends accepted plain energies to `trace`.
#[allow(clippy::too_many_arguments)]
fn newton_stage_from(
    asm: &Assembled<'_>,
    x: &mut Vec<f64>,
    e_plain: &mut f64,
    trace: &mut Vec<f64>,
    delta: f64,
    tolerance: f64,
    max_iterations: usize,
    g0: f64,
) -> Stage {
    let mut grad = asm.gradient(x, delta);
    let mut gnorm = norm(&grad);
    let mut e_reg = asm.energy(x, delta);
    let mut stagnant = 0;
    let mut iterations = 0;
    let mut stop = StopReason::MaxIterations;
    // Gradient convergence also needs a small last step: the gradient test
    // is relative to a possibly far-off initial guess.
    let mut last_step = f64::INFINITY;
    let small_step = |step: f64, x: &[f64]| step <= tolerance * (1.0 + x.iter().fold(0.0, |m: f64, v| m.max(v.abs())));

    if g0 == 0.0 || gnorm == 0.0 {
        stop = StopReason::GradientTolerance;
    }
    while stop == StopReason::MaxIterations && iterations < max_iterations {
        if gnorm <= tolerance * g0 && small_step(last_step, x) {
            stop = StopReason::GradientTolerance;
            break;
        }
        iterations += 1;
        let mut dir = asm
            .newton_direction(x, &grad, delta)
            .filter(|d| dot(d, &grad) < 0.0)
            .unwrap_or_else(|| asm.fallback_direction(x, &grad, delta));
        let mut accepted = line_search(asm, x, &dir, &grad, e_reg, *e_plain, delta, gnorm);
        if accepted.is_none() {
            dir = asm.fallback_direction(x, &grad, delta);
            accepted = line_search(asm, x, &dir, &grad, e_reg, *e_plain, delta, gnorm);
        }
        let Some((xn, er, ep)) = accepted else {
            stop = StopReason::EnergyStagnation;
            break;
        };
        let rel = (*e_plain - ep) / e_plain.abs().max(f64::MIN_POSITIVE);
        last_step = x.iter().zip(&xn).fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()));
        *x = xn;
        e_reg = er;
        *e_plain = ep;
        trace.push(ep);
        grad = asm.gradient(x, delta);
        gnorm = norm(&grad);
        if rel < 1e-14 {
            stagnant += 1;
            if stagnant >= 3 {
                stop = StopReason::EnergyStagnation;
            }
        } else {
            stagnant = 0;
        }
    }
    if stop == StopReason::MaxIterations && gnorm <= tolerance * g0 && small_step(last_step, x) {
        stop = StopReason::GradientTolerance;
    }
    Stage { iterations, stop, final_gradient_norm: gnorm }
}

#[allow(clippy::too_many_arguments)]
fn line_search(
    asm: &Assembled<'_>,
    x: &[f64],
    dir: &[f64],
    grad: &[f64],
    e_reg: f64,
    e_plain: f64,
    delta: f64,
    gnorm: f64,
) -> Option<(Vec<f64>, f64, f64)> {
    let slope = dot(dir, grad);
    if !(slope < 0.0) {
        return None;
    }
    let mut alpha = 1.0;
    let mut trial = vec![0.0; x.len()];
    for _ in 0..60 {
        for i in 0..x.len() {
            trial[i] = x[i] + alpha * dir[i];
        }
        let er = asm.energy(&trial, delta);
        let ep = asm.energy(&trial, 0.0);
        if er <= e_reg + 1e-4 * alpha * slope && ep <= e_plain {
            return Some((trial, er, ep));
        }
        // Near the minimizer energy differences drop below rounding; fall
        // back to requiring a smaller gradient.
        let noise = 64.0 * f64::EPSILON;
        if er <= e_reg + noise * e_reg.abs()
            && ep <= e_plain + noise * e_plain.abs()
            && norm(&asm.gradient(&trial, delta)) < gnorm
        {
            return Some((trial, er, ep));
        }
        alpha *= 0.5;
    }
    None
}

/// `p = 2`: the energy is the quadratic form of the cotangent stiffness
/// matrix, minimized by one Cholesky solve.
fn solve_quadratic(asm: &Assembled<'_>, x0: Vec<f64>, e0: f64) -> (Vec<f64>, PSolveReport) {
    let zeros = vec![0.0; asm.n];
    // Gradient at zero is the fixed-data load; the Hessian is constant.
    let load = asm.gradient(&zeros, 0.0);
    let g0 = norm(&asm.gradient(&x0, 0.0));
    let coo = asm.hessian(&zeros, 1.0);
    let csc = CscMatrix::from(&coo);
    let rhs = DMatrix::from_iterator(asm.n, 1, load.iter().map(|g| -g));
    let solved: Option<Vec<f64>> = CscCholesky::factor(&csc)
        .ok()
        .map(|c| c.solve(&rhs).iter().copied().collect())
        .filter(|v: &Vec<f64>| v.iter().all(|x| x.is_finite()));
    let mut x = x0;
    let mut trace = vec![e0];
    if let Some(sol) = solved {
        let e1 = asm.energy(&sol, 0.0);
        if e1 <= e0 {
            x = sol;
            trace.push(e1);
        }
    }
    let gn = norm(&asm.gradient(&x, 0.0));
    (
        x,
        PSolveReport {
            iterations: 1,
            energy_trace: trace,
            initial_gradient_norm: g0,
            final_gradient_norm: gn,
            converged: true,
            stop_reason: StopReason::DirectSolve,
        },
    )
}

/// Free vertices of a triangle region: its vertices not on the region's boundary.
pub fn region_interior_vertices(mesh: &TriangleMesh, region: &[usize]) -> Vec<usize> {
    let mut flags = vec![false; mesh.num_triangles()];
    for &t in region {
        flags[t] = true;
    }
    let mut on_border = vec![false; mesh.num_vertices()];
    for lp in mesh.region_boundary_loops(&flags) {
        for v in lp {
            on_border[v] = true;
        }
    }
    mesh.region_vertices(region)
        .into_iter()
        .filter(|&v| !on_border[v])
        .collect()
}

/// Coordinate-wise p-harmonic replacement on `region`: the region's boundary
/// vertices take `boundary` (falling back to the current images where no
/// value is given) and each coordinate of the interior is minimized
/// independently, warm-started from the current images. Vertices outside the
/// region are left untouched.
pub fn solve_map_p_dirichlet(
    map: &DiscreteMap,
    region: &[usize],
    boundary: &[(usize, Vec2)],
    p: f64,
    config: &SolverConfig,
) -> Result<(DiscreteMap, [PSolveReport; 2])> {
    let mesh = map.mesh();
    if region.iter().any(|&t| t >= mesh.num_triangles()) {
        return Err(Error::invalid("region references a triangle out of range"));
    }
    let mut flags = vec![false; mesh.num_triangles()];
    for &t in region {
        flags[t] = true;
    }
    if mesh.components(&flags).len() > 1 {
        return Err(Error::invalid("region is not edge-connected"));
    }
    let free = region_interior_vertices(mesh, region);
    let mut out = map.clone();
    let mut is_free = vec![false; mesh.num_vertices()];
    for &v in &free {
        is_free[v] = true;
    }
    for &(v, w) in boundary {
        if v >= mesh.num_vertices() || !w.is_finite() {
            return Err(Error::invalid(format!("bad boundary value for vertex {v}")));
        }
        if is_free[v] {
            return Err(Error::invalid(format!("vertex {v} is interior to the region")));
        }
        out.set_image(v, w);
    }
    let xs: Vec<f64> = out.images().iter().map(|w| w.x).collect();
    let ys: Vec<f64> = out.images().iter().map(|w| w.y).collect();
    let solve = |vals: &[f64]| {
        let prob = PSolveProblem {
            mesh,
            triangles: region,
            free: &free,
            values: vals,
            p,
        };
        let guess: Vec<f64> = free.iter().map(|&v| vals[v]).collect();
        solve_scalar_p_dirichlet(prob, &guess, config)
    };
    let (u, ru) = solve(&xs)?;
    let (v, rv) = solve(&ys)?;
    for (i, &vert) in free.iter().enumerate() {
        out.set_image(vert, Vec2::new(u[i], v[i]));
    }
    Ok((out, [ru, rv]))
}

/// True when every free value lies within the range of the fixed values on
/// the active triangles, widened by `tolerance`.
pub fn maximum_principle_check(problem: &PSolveProblem<'_>, free_values: &[f64], tolerance: f64) -> bool {
    let mut is_free = vec![false; problem.mesh.num_vertices()];
    for &v in problem.free {
        is_free[v] = true;
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &t in problem.triangles {
        for &v in &problem.mesh.triangles()[t] {
            if !is_free[v] {
                lo = lo.min(problem.values[v]);
                hi = hi.max(problem.values[v]);
            }
        }
    }
    free_values.iter().all(|&x| x >= lo - tolerance && x <= hi + tolerance)
}
