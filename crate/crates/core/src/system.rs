//! Global system assembly and solution: Dirichlet data, residual and Newton
//! matrices on the free DoFs, a deterministic sparse direct solve, and the
//! Newton iteration for the quasi-linear scheme
//!
//!   A_h(u; u, v) = (a(u₀)∇_w u, ∇_w v) + s_h(u, v) = (f, v₀)  for all v.

use std::sync::Arc;
use std::time::Instant;

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis;
use crate::element::{self, CellOps, ElementError, ElementOps};
use crate::mesh::Mesh;
use crate::problem::Problem;
use crate::space::{DofMap, WgFunction};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Element(#[from] ElementError),
    #[error(
        "coefficient a(u₀) = {value:.6e} is not positive at quadrature point \
         ({x:.6}, {y:.6}) of cell {cell}; iterate left the admissible range"
    )]
    CoefficientNotPositive {
        cell: usize,
        x: f64,
        y: f64,
        value: f64,
    },
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
    #[error("linear solve stagnated: relative residual {rel:.3e} exceeds {tol:.3e}")]
    LinearResidual { rel: f64, tol: f64 },
    #[error("Newton did not converge in {max_iterations} iterations (last increment {last:.3e})")]
    MaxIterations { max_iterations: usize, last: f64 },
    #[error("solution file rejected: {0}")]
    SolutionFormat(String),
}

/// Sparse linear system on the free DoFs, kept as triplets until reduction.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub n: usize,
    pub triplets: Vec<(usize, usize, f64)>,
    pub rhs: DVector<f64>,
}

impl SparseSystem {
    pub fn new(n: usize) -> Self {
        SparseSystem {
            n,
            triplets: Vec::new(),
            rhs: DVector::zeros(n),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n && col < self.n);
        self.triplets.push((row, col, value));
    }

    /// Sum duplicate entries. Triplets are sorted by (row, col) first so the
    /// accumulation order — and hence the result — is deterministic.
    pub fn reduce(&mut self) {
        self.triplets.sort_unstable_by_key(|t| (t.0, t.1));
        let mut out = 0;
        for i in 0..self.triplets.len() {
            if out > 0
                && self.triplets[out - 1].0 == self.triplets[i].0
                && self.triplets[out - 1].1 == self.triplets[i].1
            {
                self.triplets[out - 1].2 += self.triplets[i].2;
            } else {
                self.triplets[out] = self.triplets[i];
                out += 1;
            }
        }
        self.triplets.truncate(out);
    }

    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        for &(r, c, v) in &self.triplets {
            y[r] += v * x[c];
        }
        y
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonConfig {
    /// Stop when the energy norm of the increment drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Relative residual required of each linear solve.
    pub linear_tol: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            tolerance: 1e-12,
            max_iterations: 50,
            linear_tol: 1e-13,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SolveReport {
    /// Newton iterations performed (increments at or above tolerance; the
    /// final sub-tolerance increment is recorded but not counted, so a linear
    /// problem reports exactly 1).
    pub iterations: usize,
    /// Energy norm of every increment, in order.
    pub increment_norms: Vec<f64>,
    /// ℓ² norm of the assembled residual at the returned iterate.
    pub final_residual: f64,
    pub seconds_assembly: f64,
    pub seconds_linear: f64,
    pub seconds_total: f64,
    pub warnings: Vec<String>,
}

/// Full-length coefficient vector of the Dirichlet data: Q_b g on every
/// boundary-edge DoF, zero elsewhere. The free-DoF index map lives on the
/// [`DofMap`] (`free_index` / `global_of_free`).
pub fn apply_dirichlet(problem: &Problem, mesh: &Mesh, dm: &DofMap) -> DVector<f64> {
    let mut fixed = DVector::zeros(dm.n_total());
    for e in 0..mesh.edges.len() {
        if !dm.is_boundary_edge(e) {
            continue;
        }
        let c = element::project_qb(mesh, e, dm.k, &|x, y| (problem.g)(x, y));
        fixed
            .rows_mut(dm.edge_range(e).start, dm.edge_dim)
            .copy_from(&c);
    }
    fixed
}

/// Scatter a free-DoF vector into a full coefficient vector (zeros on the
/// constrained DoFs).
pub fn expand_free(dm: &DofMap, free: &DVector<f64>) -> DVector<f64> {
    let mut full = DVector::zeros(dm.n_total());
    for fi in 0..dm.n_free() {
        full[dm.global_of_free(fi)] = free[fi];
    }
    full
}

/// a(u₀) and a'(u₀) samples at the cell rule's points, with the positivity
/// check the scheme's analysis requires.
fn coefficient_samples(
    ops: &CellOps,
    problem: &Problem,
    c_loc: &DVector<f64>,
) -> Result<(Vec<f64>, Vec<f64>), SolveError> {
    let u0 = ops.u0_at_q(c_loc);
    let mut a = Vec::with_capacity(u0.len());
    let mut au = Vec::with_capacity(u0.len());
    for (q, &u) in u0.iter().enumerate() {
        let p = ops.rule.points[q];
        let av = (problem.a)(p.x, p.y, u);
        if av.is_nan() || av <= 0.0 {
            return Err(SolveError::CoefficientNotPositive {
                cell: ops.cell,
                x: p.x,
                y: p.y,
                value: av,
            });
        }
        a.push(av);
        au.push((problem.a_u)(p.x, p.y, u));
    }
    Ok((a, au))
}

/// The load vector (f, φ_i₀)_K over the local DoFs (zero on edge DoFs).
fn cell_load(ops: &CellOps, problem: &Problem) -> DVector<f64> {
    let mut load = DVector::zeros(ops.n_loc);
    for (q, p) in ops.rule.points.iter().enumerate() {
        let wf = ops.rule.weights[q] * (problem.f)(p.x, p.y);
        for j in 0..ops.n_int {
            load[j] += wf * ops.basis_at_q[(q, j)];
        }
    }
    load
}

/// Local residual entries r[i] = A_K(u; u, φ_i) − (f, φ_i₀)_K.
fn local_residual(
    ops: &CellOps,
    problem: &Problem,
    c_loc: &DVector<f64>,
    a_at_q: &[f64],
    grad_u: (&DVector<f64>, &DVector<f64>),
) -> DVector<f64> {
    let (gux, guy) = grad_u;
    let nq = ops.rule.weights.len();
    let sx = DVector::from_iterator(
        nq,
        (0..nq).map(|q| ops.rule.weights[q] * a_at_q[q] * gux[q]),
    );
    let sy = DVector::from_iterator(
        nq,
        (0..nq).map(|q| ops.rule.weights[q] * a_at_q[q] * guy[q]),
    );
    let mut r = ops.wgrad_x_at_q.transpose() * sx;
    r += ops.wgrad_y_at_q.transpose() * sy;
    r += &ops.stab * c_loc;
    r -= cell_load(ops, problem);
    r
}

/// Residual of the nonlinear scheme at u, over the free test DoFs.
///
/// u must already carry the Dirichlet values on its constrained DoFs.
pub fn assemble_residual(
    u: &WgFunction,
    problem: &Problem,
    mesh: &Mesh,
    ops: &ElementOps,
) -> Result<DVector<f64>, SolveError> {
    let dm = &ops.dofmap;
    let mut out = DVector::zeros(dm.n_free());
    for cops in &ops.cells {
        let c = u.local_coeffs(mesh, cops.cell);
        let (a, _au) = coefficient_samples(cops, problem, &c)?;
        let (gux, guy) = cops.wgrad_at_q(&c);
        let r = local_residual(cops, problem, &c, &a, (&gux, &guy));
        for (i, &g) in cops.globals.iter().enumerate() {
            if let Some(fi) = dm.free_index(g) {
                out[fi] += r[i];
            }
        }
    }
    Ok(out)
}

/// Newton matrix D_h(u; ·, ·) on the free DoFs (rhs left at zero).
pub fn assemble_jacobian(
    u: &WgFunction,
    problem: &Problem,
    mesh: &Mesh,
    ops: &ElementOps,
) -> Result<SparseSystem, SolveError> {
    let dm = &ops.dofmap;
    let mut sys = SparseSystem::new(dm.n_free());
    for cops in &ops.cells {
        let c = u.local_coeffs(mesh, cops.cell);
        let (a, au) = coefficient_samples(cops, problem, &c)?;
        let (gux, guy) = cops.wgrad_at_q(&c);
        let d = cops.local_form_d(&a, &au, (&gux, &guy))?;
        scatter_matrix(&mut sys, dm, &cops.globals, &d);
    }
    sys.reduce();
    Ok(sys)
}

/// Linear system of the frozen-coefficient scheme: find u with
/// A_h(w; u, v) = (f, v₀), where the coefficient a(w₀(x)) is sampled through
/// the given field (which may live on a different, coarser mesh).
pub fn assemble_frozen(
    w0: &dyn Fn(f64, f64) -> f64,
    problem: &Problem,
    mesh: &Mesh,
    ops: &ElementOps,
) -> Result<SparseSystem, SolveError> {
    let dm = &ops.dofmap;
    let fixed = apply_dirichlet(problem, mesh, dm);
    let ubc = WgFunction::from_coeffs(dm.clone(), fixed);
    let mut sys = SparseSystem::new(dm.n_free());
    for cops in &ops.cells {
        let mut a_at_q = Vec::with_capacity(cops.rule.points.len());
        for p in &cops.rule.points {
            let av = (problem.a)(p.x, p.y, w0(p.x, p.y));
            if av.is_nan() || av <= 0.0 {
                return Err(SolveError::CoefficientNotPositive {
                    cell: cops.cell,
                    x: p.x,
                    y: p.y,
                    value: av,
                });
            }
            a_at_q.push(av);
        }
        let m = cops.local_form_a(&a_at_q)?;
        let cbc = ubc.local_coeffs(mesh, cops.cell);
        let bc_part = &m * &cbc;
        let load = cell_load(cops, problem);
        for (i, &g) in cops.globals.iter().enumerate() {
            if let Some(fi) = dm.free_index(g) {
                sys.rhs[fi] += load[i] - bc_part[i];
            }
        }
        scatter_matrix(&mut sys, dm, &cops.globals, &m);
    }
    sys.reduce();
    Ok(sys)
}

fn scatter_matrix(
    sys: &mut SparseSystem,
    dm: &DofMap,
    globals: &[usize],
    local: &nalgebra::DMatrix<f64>,
) {
    let free: Vec<Option<usize>> = globals.iter().map(|&g| dm.free_index(g)).collect();
    for (i, fi) in free.iter().enumerate() {
        let Some(fi) = *fi else { continue };
        for (j, fj) in free.iter().enumerate() {
            if let Some(fj) = *fj {
                sys.push(fi, fj, local[(i, j)]);
            }
        }
    }
}

/// Solve the reduced system with a sparse LU factorization, polishing with
/// iterative refinement until the relative residual meets `tol`.
///
/// On large systems the relative residual ‖Ax−b‖/‖b‖ has a floor of roughly
/// ε·‖A‖·‖x‖/‖b‖ that no double-precision solver can go below; refinement
/// that stalls there is accepted when the normwise backward error
/// ‖Ax−b‖/(‖A‖_F‖x‖ + ‖b‖) has reached machine-precision scale. Stagnation
/// above that level is reported as an error.
pub fn solve_linear(sys: &SparseSystem, tol: f64) -> Result<DVector<f64>, SolveError> {
    faer::set_global_parallelism(faer::Par::Seq);
    let n = sys.n;
    let bnorm = sys.rhs.norm();
    if bnorm == 0.0 {
        return Ok(DVector::zeros(n));
    }
    let trips: Vec<Triplet<usize, usize, f64>> = sys
        .triplets
        .iter()
        .map(|&(r, c, v)| Triplet::new(r, c, v))
        .collect();
    let a = SparseColMat::try_new_from_triplets(n, n, &trips)
        .map_err(|e| SolveError::Factorization(format!("{e:?}")))?;
    let lu = a
        .sp_lu()
        .map_err(|e| SolveError::Factorization(format!("{e:?}")))?;
    let solve_with = |rhs: &DVector<f64>| -> DVector<f64> {
        let b = Mat::from_fn(n, 1, |i, _| rhs[i]);
        let x = lu.solve(&b);
        DVector::from_fn(n, |i, _| x[(i, 0)])
    };
    let anorm: f64 = sys
        .triplets
        .iter()
        .map(|&(_, _, v)| v * v)
        .sum::<f64>()
        .sqrt();
    let backward_floor = 64.0 * f64::EPSILON;
    let mut x = solve_with(&sys.rhs);
    let mut rel = f64::INFINITY;
    for _ in 0..4 {
        let r = &sys.rhs - sys.matvec(&x);
        rel = r.norm() / bnorm;
        if rel <= tol {
            return Ok(x);
        }
        let backward = r.norm() / (anorm * x.norm() + bnorm);
        if backward <= backward_floor {
            return Ok(x);
        }
        x += solve_with(&r);
    }
    Err(SolveError::LinearResidual { rel, tol })
}

/// Newton iteration for the nonlinear scheme, starting from zero (with the
/// Dirichlet values imposed) and updating by
/// D_h(u; δ, v) = −[A_h(u; u, v) − (f, v₀)] until |||δ||| < tolerance.
pub fn newton_solve(
    problem: &Problem,
    mesh: &Mesh,
    k: usize,
    config: &NewtonConfig,
) -> Result<(WgFunction, SolveReport), SolveError> {
    let dofmap = Arc::new(DofMap::new(mesh, k));
    let ops = ElementOps::build(mesh, dofmap)?;
    newton_solve_with(problem, mesh, &ops, config)
}

/// Newton iteration reusing prebuilt element operators.
pub fn newton_solve_with(
    problem: &Problem,
    mesh: &Mesh,
    ops: &ElementOps,
    config: &NewtonConfig,
) -> Result<(WgFunction, SolveReport), SolveError> {
    let t0 = Instant::now();
    let dm = ops.dofmap.clone();
    let fixed = apply_dirichlet(problem, mesh, &dm);
    let mut u = WgFunction::from_coeffs(dm.clone(), fixed);
    let mut report = SolveReport::default();
    let mut counted = 0usize;
    loop {
        let ta = Instant::now();
        let sys = assemble_newton_system(&u, problem, mesh, ops)?;
        report.seconds_assembly += ta.elapsed().as_secs_f64();
        let tl = Instant::now();
        let delta_free = solve_linear(&sys, config.linear_tol)?;
        report.seconds_linear += tl.elapsed().as_secs_f64();
        let delta = expand_free(&dm, &delta_free);
        u.coeffs += &delta;
        let dfun = WgFunction::from_coeffs(dm.clone(), delta);
        let nrm = analysis::energy_norm(mesh, ops, &dfun);
        report.increment_norms.push(nrm);
        if !nrm.is_finite() {
            return Err(SolveError::Factorization(format!(
                "Newton increment has non-finite energy norm {nrm}"
            )));
        }
        if nrm < config.tolerance {
            break;
        }
        counted += 1;
        if counted >= config.max_iterations {
            return Err(SolveError::MaxIterations {
                max_iterations: config.max_iterations,
                last: nrm,
            });
        }
    }
    report.iterations = counted;
    let r = assemble_residual(&u, problem, mesh, ops)?;
    report.final_residual = r.norm();
    report.seconds_total = t0.elapsed().as_secs_f64();
    Ok((u, report))
}

/// One combined pass: Newton matrix plus rhs = −residual.
fn assemble_newton_system(
    u: &WgFunction,
    problem: &Problem,
    mesh: &Mesh,
    ops: &ElementOps,
) -> Result<SparseSystem, SolveError> {
    let dm = &ops.dofmap;
    let mut sys = SparseSystem::new(dm.n_free());
    for cops in &ops.cells {
        let c = u.local_coeffs(mesh, cops.cell);
        let (a, au) = coefficient_samples(cops, problem, &c)?;
        let (gux, guy) = cops.wgrad_at_q(&c);
        let d = cops.local_form_d(&a, &au, (&gux, &guy))?;
        let r = local_residual(cops, problem, &c, &a, (&gux, &guy));
        let free: Vec<Option<usize>> = cops.globals.iter().map(|&g| dm.free_index(g)).collect();
        for (i, fi) in free.iter().enumerate() {
            let Some(fi) = *fi else { continue };
            sys.rhs[fi] -= r[i];
            for (j, fj) in free.iter().enumerate() {
                if let Some(fj) = *fj {
                    sys.push(fi, fj, d[(i, j)]);
                }
            }
        }
    }
    sys.reduce();
    Ok(sys)
}

pub const SOLUTION_FORMAT: &str = "wg-solution/1";
pub const DOF_ORDER: &str = "cells-then-edges/v1";

/// On-disk form of a solved coefficient vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionFile {
    pub format: String,
    pub k: usize,
    pub n_cells: usize,
    pub n_edges: usize,
    pub dof_order: String,
    pub coeffs: Vec<f64>,
}

impl SolutionFile {
    pub fn from_function(u: &WgFunction) -> Self {
        SolutionFile {
            format: SOLUTION_FORMAT.to_string(),
            k: u.dofmap.k,
            n_cells: u.dofmap.n_cells,
            n_edges: u.dofmap.n_edges,
            dof_order: DOF_ORDER.to_string(),
            coeffs: u.coeffs.iter().copied().collect(),
        }
    }

    /// Rebuild the function on its mesh, validating the layout metadata.
    pub fn into_function(self, mesh: &Mesh) -> Result<WgFunction, SolveError> {
        if self.format != SOLUTION_FORMAT {
            return Err(SolveError::SolutionFormat(format!(
                "format {:?}, expected {SOLUTION_FORMAT:?}",
                self.format
            )));
        }
        if self.dof_order != DOF_ORDER {
            return Err(SolveError::SolutionFormat(format!(
                "dof order {:?}, expected {DOF_ORDER:?}",
                self.dof_order
            )));
        }
        let dm = DofMap::new(mesh, self.k);
        if self.n_cells != dm.n_cells || self.n_edges != dm.n_edges {
            return Err(SolveError::SolutionFormat(format!(
                "mesh has {} cells / {} edges, file was written for {} / {}",
                dm.n_cells, dm.n_edges, self.n_cells, self.n_edges
            )));
        }
        if self.coeffs.len() != dm.n_total() {
            return Err(SolveError::SolutionFormat(format!(
                "coefficient count {} does not match layout total {}",
                self.coeffs.len(),
                dm.n_total()
            )));
        }
        Ok(WgFunction::from_coeffs(
            Arc::new(dm),
            DVector::from_vec(self.coeffs),
        ))
    }
}
