//! Element-local operators: discrete weak gradients, the boundary stabilizer,
//! the local matrices of the nonlinear form and of its Newton linearization,
//! and the L² projections into the discrete space.
//!
//! For a weak function v = {v₀, v_b} on a cell K, the weak gradient
//! ∇_w v ∈ [P_{k−1}(K)]² is defined by
//!
//!   (∇_w v, φ)_K = −(v₀, ∇·φ)_K + ⟨v_b, φ·n⟩_{∂K}   for all φ ∈ [P_{k−1}(K)]².
//!
//! Per component this is a mass solve: G = M_g⁻¹ B, with one column of B per
//! local DoF. The stabilizer is s_K(v, w) = h_K⁻¹ ⟨v₀ − v_b, w₀ − w_b⟩_{∂K}.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Point2};
use thiserror::Error;

use crate::mesh::Mesh;
use crate::poly::{self, CellBasis, EdgeBasis};
use crate::quad::{self, CellRule, EdgeRule, QuadError};
use crate::space::{DofMap, WgFunction};

#[derive(Debug, Error)]
pub enum ElementError {
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error("cell {cell}: mass matrix is not positive definite (degenerate geometry?)")]
    MassNotSpd { cell: usize },
    #[error("diffusion coefficient sample {value:.6e} at a quadrature point is not positive")]
    NonPositiveCoefficient { value: f64 },
}

/// Quadrature data for one edge of a cell, seen from that cell.
#[derive(Debug, Clone)]
pub struct EdgeData {
    /// Global edge index.
    pub edge: usize,
    pub rule: EdgeRule,
    /// The cell's outward unit normal on this edge.
    pub normal: (f64, f64),
    /// Cell basis values at the edge quadrature points (n_q × cell_dim).
    pub basis_at_q: DMatrix<f64>,
    /// Gradient-basis values at the edge quadrature points (n_q × gdim).
    pub gbasis_at_q: DMatrix<f64>,
    /// Legendre values at the edge quadrature parameters (n_q × edge_dim).
    pub leg_at_q: DMatrix<f64>,
}

/// Everything the assembly loops need on one cell, computed once.
///
/// Local DoF order: the cell's interior coefficients first, then the adjacent
/// edges' coefficients in the cell's CCW edge order.
#[derive(Debug, Clone)]
pub struct CellOps {
    pub cell: usize,
    pub k: usize,
    /// Number of interior DoFs, dim P_k(K).
    pub n_int: usize,
    /// dim P_{k−1}(K), per gradient component.
    pub gdim: usize,
    pub edge_dim: usize,
    /// Total local DoFs: n_int + (#edges)·edge_dim.
    pub n_loc: usize,
    /// Global DoF index of each local DoF.
    pub globals: Vec<usize>,
    pub basis: CellBasis,
    pub gbasis: CellBasis,
    /// Cell rule of degree 2k+4 used for all form assembly on this cell.
    pub rule: CellRule,
    pub edges: Vec<EdgeData>,
    /// Weak-gradient component matrices (gdim × n_loc): coefficients of the
    /// x- and y-components of ∇_w v in the scaled gradient basis.
    pub gx: DMatrix<f64>,
    pub gy: DMatrix<f64>,
    /// Stabilizer matrix (n_loc × n_loc), symmetric PSD.
    pub stab: DMatrix<f64>,
    /// Energy matrix Gxᵀ M_g Gx + Gyᵀ M_g Gy + S (squared local energy norm).
    pub energy: DMatrix<f64>,
    pub mass_chol: Cholesky<f64, Dyn>,
    pub gmass: DMatrix<f64>,
    pub gmass_chol: Cholesky<f64, Dyn>,
    /// Cell basis values at the cell rule's points (n_q × n_int).
    pub basis_at_q: DMatrix<f64>,
    /// Gradient-basis values at the cell rule's points (n_q × gdim).
    pub gbasis_at_q: DMatrix<f64>,
    /// ∇_w values of every local DoF at the cell rule's points (n_q × n_loc).
    pub wgrad_x_at_q: DMatrix<f64>,
    pub wgrad_y_at_q: DMatrix<f64>,
    /// Length scale of the stabilizer weight 1/h_stab: the cell diameter
    /// normalized by √2 so that square cells use their side length, the
    /// customary mesh parameter on uniform grids. The same scale weights the
    /// jump terms of the discrete norms, keeping forms and norms consistent.
    pub h_stab: f64,
    pub area: f64,
}

/// Per-cell operators for a whole mesh.
#[derive(Debug, Clone)]
pub struct ElementOps {
    pub dofmap: Arc<DofMap>,
    pub cells: Vec<CellOps>,
}

fn values_matrix(basis: &CellBasis, points: &[Point2<f64>]) -> DMatrix<f64> {
    let dim = basis.dim();
    let mut vals = DMatrix::zeros(points.len(), dim);
    let mut row = vec![0.0; dim];
    for (q, p) in points.iter().enumerate() {
        basis.eval_into(p, &mut row);
        for j in 0..dim {
            vals[(q, j)] = row[j];
        }
    }
    vals
}

fn build_cell(mesh: &Mesh, dofmap: &DofMap, ci: usize) -> Result<CellOps, ElementError> {
    let k = dofmap.k;
    let cell = &mesh.cells[ci];
    let n_int = dofmap.cell_dim;
    let edge_dim = dofmap.edge_dim;
    let n_edges = cell.edges.len();
    let n_loc = n_int + n_edges * edge_dim;
    let h_stab = cell.diameter / std::f64::consts::SQRT_2;

    let basis = CellBasis::for_cell(mesh, ci, k);
    let gbasis = CellBasis::for_cell(mesh, ci, k - 1);
    let gdim = gbasis.dim();
    let rule = quad::cell_quadrature(mesh, ci, 2 * k + 4)?;

    let basis_at_q = values_matrix(&basis, &rule.points);
    let gbasis_at_q = values_matrix(&gbasis, &rule.points);

    let mass = poly::cell_mass_matrix(&basis, &rule);
    let mass_chol = poly::spd_cholesky(&mass).map_err(|_| ElementError::MassNotSpd { cell: ci })?;
    let gmass = poly::cell_mass_matrix(&gbasis, &rule);
    let gmass_chol =
        poly::spd_cholesky(&gmass).map_err(|_| ElementError::MassNotSpd { cell: ci })?;

    let ebasis = EdgeBasis::new(k);
    let mut edges = Vec::with_capacity(n_edges);
    for (le, &e) in cell.edges.iter().enumerate() {
        let erule = quad::edge_quadrature(mesh, e, 2 * k + 2)?;
        let n_q = erule.points.len();
        let eb_at_q = values_matrix(&basis, &erule.points);
        let egb_at_q = values_matrix(&gbasis, &erule.points);
        let mut leg_at_q = DMatrix::zeros(n_q, edge_dim);
        let mut row = vec![0.0; edge_dim];
        for (q, &t) in erule.params.iter().enumerate() {
            ebasis.eval_into(t, &mut row);
            for j in 0..edge_dim {
                leg_at_q[(q, j)] = row[j];
            }
        }
        edges.push(EdgeData {
            edge: e,
            rule: erule,
            normal: (cell.normals[le].x, cell.normals[le].y),
            basis_at_q: eb_at_q,
            gbasis_at_q: egb_at_q,
            leg_at_q,
        });
    }

    // Right-hand sides of the weak-gradient definition, one column per local
    // DoF, tested against (g_i, 0) and (0, g_i) for the x/y components.
    let mut bx = DMatrix::zeros(gdim, n_loc);
    let mut by = DMatrix::zeros(gdim, n_loc);
    {
        // Interior DoFs: −(φ_j, ∂g_i).
        let mut ggx = vec![0.0; gdim];
        let mut ggy = vec![0.0; gdim];
        for (q, p) in rule.points.iter().enumerate() {
            gbasis.grad_into(p, &mut ggx, &mut ggy);
            let w = rule.weights[q];
            for i in 0..gdim {
                let (wx, wy) = (w * ggx[i], w * ggy[i]);
                for j in 0..n_int {
                    let v = basis_at_q[(q, j)];
                    bx[(i, j)] -= wx * v;
                    by[(i, j)] -= wy * v;
                }
            }
        }
        // Edge DoFs: +⟨P_l, g_i n⟩ on the owning edge.
        for (le, ed) in edges.iter().enumerate() {
            let (nx, ny) = ed.normal;
            for q in 0..ed.rule.points.len() {
                let w = ed.rule.weights[q];
                for i in 0..gdim {
                    let g = ed.gbasis_at_q[(q, i)];
                    for l in 0..edge_dim {
                        let j = n_int + le * edge_dim + l;
                        let pl = ed.leg_at_q[(q, l)];
                        bx[(i, j)] += w * g * pl * nx;
                        by[(i, j)] += w * g * pl * ny;
                    }
                }
            }
        }
    }
    let gx = gmass_chol.solve(&bx);
    let gy = gmass_chol.solve(&by);

    // Stabilizer: h_stab⁻¹ Σ_e Σ_q w_q (v₀ − v_b)(w₀ − w_b) at the edge points.
    let mut stab = DMatrix::zeros(n_loc, n_loc);
    let mut trace = vec![0.0; n_loc];
    for (le, ed) in edges.iter().enumerate() {
        for q in 0..ed.rule.points.len() {
            trace.iter_mut().for_each(|t| *t = 0.0);
            for (j, t) in trace[..n_int].iter_mut().enumerate() {
                *t = ed.basis_at_q[(q, j)];
            }
            for l in 0..edge_dim {
                trace[n_int + le * edge_dim + l] = -ed.leg_at_q[(q, l)];
            }
            let w = ed.rule.weights[q] / h_stab;
            for i in 0..n_loc {
                let wi = w * trace[i];
                if wi == 0.0 {
                    continue;
                }
                for j in 0..n_loc {
                    stab[(i, j)] += wi * trace[j];
                }
            }
        }
    }
    // Symmetrize exactly (accumulation order above is already symmetric in
    // exact arithmetic; this removes last-bit asymmetry).
    for i in 0..n_loc {
        for j in 0..i {
            let s = 0.5 * (stab[(i, j)] + stab[(j, i)]);
            stab[(i, j)] = s;
            stab[(j, i)] = s;
        }
    }

    let energy = {
        let mut e = &gx.transpose() * &(&gmass * &gx);
        e += &gy.transpose() * &(&gmass * &gy);
        e += &stab;
        e
    };

    let wgrad_x_at_q = &gbasis_at_q * &gx;
    let wgrad_y_at_q = &gbasis_at_q * &gy;

    Ok(CellOps {
        cell: ci,
        k,
        n_int,
        gdim,
        edge_dim,
        n_loc,
        globals: dofmap.cell_local_to_global(mesh, ci),
        basis,
        gbasis,
        rule,
        edges,
        gx,
        gy,
        stab,
        energy,
        mass_chol,
        gmass,
        gmass_chol,
        basis_at_q,
        gbasis_at_q,
        wgrad_x_at_q,
        wgrad_y_at_q,
        h_stab,
        area: cell.area,
    })
}

impl ElementOps {
    pub fn build(mesh: &Mesh, dofmap: Arc<DofMap>) -> Result<Self, ElementError> {
        let cells = (0..mesh.cells.len())
            .map(|ci| build_cell(mesh, &dofmap, ci))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ElementOps { dofmap, cells })
    }

    /// Project a scalar field into the weak space: Q₀ on every cell interior,
    /// Q_b on every edge.
    pub fn project_qh(&self, mesh: &Mesh, f: &dyn Fn(f64, f64) -> f64) -> WgFunction {
        let mut u = WgFunction::zeros(self.dofmap.clone());
        for ops in &self.cells {
            let c = project_q0(ops, f);
            let rng = self.dofmap.cell_range(ops.cell);
            u.coeffs.rows_mut(rng.start, c.len()).copy_from(&c);
        }
        for e in 0..mesh.edges.len() {
            let c = project_qb(mesh, e, self.dofmap.k, f);
            let rng = self.dofmap.edge_range(e);
            u.coeffs.rows_mut(rng.start, c.len()).copy_from(&c);
        }
        u
    }
}

impl CellOps {
    /// Values of u₀ at the cell rule's quadrature points.
    pub fn u0_at_q(&self, c_loc: &DVector<f64>) -> DVector<f64> {
        &self.basis_at_q * c_loc.rows(0, self.n_int)
    }

    /// Weak-gradient values of the local function at the cell rule's points.
    pub fn wgrad_at_q(&self, c_loc: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (&self.wgrad_x_at_q * c_loc, &self.wgrad_y_at_q * c_loc)
    }

    /// Gradient-basis coefficients of ∇_w applied to the local coefficients.
    pub fn weak_gradient_coeffs(&self, c_loc: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (&self.gx * c_loc, &self.gy * c_loc)
    }

    /// The a-weighted gradient mass matrix W[i,j] = Σ_q w_q a_q g_i(x_q) g_j(x_q).
    pub fn weighted_gmass(&self, a_at_q: &[f64]) -> DMatrix<f64> {
        let gdim = self.gdim;
        let mut m = DMatrix::zeros(gdim, gdim);
        for (q, &a) in a_at_q.iter().enumerate() {
            let w = self.rule.weights[q] * a;
            for i in 0..gdim {
                let wi = w * self.gbasis_at_q[(q, i)];
                for j in i..gdim {
                    m[(i, j)] += wi * self.gbasis_at_q[(q, j)];
                }
            }
        }
        for i in 0..gdim {
            for j in 0..i {
                m[(i, j)] = m[(j, i)];
            }
        }
        m
    }

    /// Local matrix of the form (a ∇_w ·, ∇_w ·)_K + s_K with the coefficient
    /// sampled at the cell rule's points.
    pub fn local_form_a(&self, a_at_q: &[f64]) -> Result<DMatrix<f64>, ElementError> {
        if let Some(&bad) = a_at_q.iter().find(|&&a| a.is_nan() || a <= 0.0) {
            return Err(ElementError::NonPositiveCoefficient { value: bad });
        }
        let w = self.weighted_gmass(a_at_q);
        let mut m = &self.gx.transpose() * &(&w * &self.gx);
        m += &self.gy.transpose() * &(&w * &self.gy);
        m += &self.stab;
        Ok(m)
    }

    /// Local Newton matrix: the frozen-coefficient part plus the coupling
    /// term (a'(w₀) φ₀ ∇_w w, ∇_w v)_K, where φ is the trial function.
    ///
    /// `grad_w_at_q` carries ∇_w w at the cell rule's points.
    pub fn local_form_d(
        &self,
        a_at_q: &[f64],
        au_at_q: &[f64],
        grad_w_at_q: (&DVector<f64>, &DVector<f64>),
    ) -> Result<DMatrix<f64>, ElementError> {
        let mut d = self.local_form_a(a_at_q)?;
        let (gwx, gwy) = grad_w_at_q;
        for (q, &au) in au_at_q.iter().enumerate() {
            let w = self.rule.weights[q] * au;
            if w == 0.0 {
                continue;
            }
            for i in 0..self.n_loc {
                let dot = gwx[q] * self.wgrad_x_at_q[(q, i)] + gwy[q] * self.wgrad_y_at_q[(q, i)];
                let wi = w * dot;
                if wi == 0.0 {
                    continue;
                }
                for j in 0..self.n_int {
                    d[(i, j)] += wi * self.basis_at_q[(q, j)];
                }
            }
        }
        Ok(d)
    }

    /// Evaluate u₀ (given local coefficients) at an arbitrary point.
    pub fn eval_u0(&self, c_loc: &DVector<f64>, p: &Point2<f64>) -> f64 {
        let vals = self.basis.eval(p);
        (0..self.n_int).map(|j| c_loc[j] * vals[j]).sum()
    }

    /// Evaluate ∇u₀ at an arbitrary point.
    pub fn eval_grad_u0(&self, c_loc: &DVector<f64>, p: &Point2<f64>) -> (f64, f64) {
        let mut gx = vec![0.0; self.n_int];
        let mut gy = vec![0.0; self.n_int];
        self.basis.grad_into(p, &mut gx, &mut gy);
        let mut out = (0.0, 0.0);
        for j in 0..self.n_int {
            out.0 += c_loc[j] * gx[j];
            out.1 += c_loc[j] * gy[j];
        }
        out
    }

    /// Evaluate ∇_w of the local function at an arbitrary point.
    pub fn eval_wgrad(&self, c_loc: &DVector<f64>, p: &Point2<f64>) -> (f64, f64) {
        let (cx, cy) = self.weak_gradient_coeffs(c_loc);
        let vals = self.gbasis.eval(p);
        let mut out = (0.0, 0.0);
        for i in 0..self.gdim {
            out.0 += cx[i] * vals[i];
            out.1 += cy[i] * vals[i];
        }
        out
    }
}

/// L² projection of a scalar field onto P_k of one cell.
pub fn project_q0(ops: &CellOps, f: &dyn Fn(f64, f64) -> f64) -> DVector<f64> {
    let mut rhs = DVector::zeros(ops.n_int);
    for (q, p) in ops.rule.points.iter().enumerate() {
        let wf = ops.rule.weights[q] * f(p.x, p.y);
        for j in 0..ops.n_int {
            rhs[j] += wf * ops.basis_at_q[(q, j)];
        }
    }
    ops.mass_chol.solve(&rhs)
}

/// L² projection of a scalar field onto P_k of one edge (Legendre
/// coefficients in the edge's canonical parameter).
pub fn project_qb(mesh: &Mesh, edge: usize, k: usize, f: &dyn Fn(f64, f64) -> f64) -> DVector<f64> {
    let rule = quad::edge_quadrature(mesh, edge, 2 * k + 2)
        .expect("edge projection degree stays within the rule cap for supported k");
    let h_e = mesh.edges[edge].length;
    let ebasis = EdgeBasis::new(k);
    let mut coeffs = DVector::zeros(k + 1);
    let mut vals = vec![0.0; k + 1];
    for (q, p) in rule.points.iter().enumerate() {
        ebasis.eval_into(rule.params[q], &mut vals);
        let wf = rule.weights[q] * f(p.x, p.y);
        for j in 0..=k {
            coeffs[j] += wf * vals[j];
        }
    }
    // Legendre mass on the edge is diagonal: h_e/(2j+1).
    for j in 0..=k {
        coeffs[j] *= (2 * j + 1) as f64 / h_e;
    }
    coeffs
}

/// L² projection of a vector field onto [P_{k−1}]² of one cell; returns the
/// coefficient vectors of the two components in the scaled gradient basis.
pub fn project_pih(
    ops: &CellOps,
    fx: &dyn Fn(f64, f64) -> f64,
    fy: &dyn Fn(f64, f64) -> f64,
) -> (DVector<f64>, DVector<f64>) {
    let mut rx = DVector::zeros(ops.gdim);
    let mut ry = DVector::zeros(ops.gdim);
    for (q, p) in ops.rule.points.iter().enumerate() {
        let w = ops.rule.weights[q];
        let (vx, vy) = (w * fx(p.x, p.y), w * fy(p.x, p.y));
        for i in 0..ops.gdim {
            let g = ops.gbasis_at_q[(q, i)];
            rx[i] += vx * g;
            ry[i] += vy * g;
        }
    }
    (ops.gmass_chol.solve(&rx), ops.gmass_chol.solve(&ry))
}
