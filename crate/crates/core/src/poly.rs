//! Polynomial bases on cells and edges, and their mass matrices.
//!
//! Cell bases are scaled monomials ((x−x_c)/h_K)^α ((y−y_c)/h_K)^β in graded
//! lexicographic order (1; x, y; x², xy, y²; …) — the scaling keeps mass
//! matrices well conditioned independently of the cell size. Edge bases are
//! Legendre polynomials in the arc-length parameter t ∈ [−1,1] taken along
//! the edge's canonical direction, so both neighbouring cells see identical
//! edge coefficients.

use nalgebra::{Cholesky, DMatrix, Dyn, Point2};
use thiserror::Error;

use crate::mesh::Mesh;
use crate::quad::{CellRule, EdgeRule};

#[derive(Debug, Error)]
pub enum PolyError {
    #[error("mass matrix is not positive definite (degenerate cell or insufficient quadrature)")]
    NotSpd,
}

/// Graded-lex exponent pairs (α, β) with α+β ≤ k.
pub fn monomial_exponents(degree: usize) -> Vec<(u32, u32)> {
    let mut exps = Vec::with_capacity((degree + 1) * (degree + 2) / 2);
    for total in 0..=degree as u32 {
        for beta in 0..=total {
            exps.push((total - beta, beta));
        }
    }
    exps
}

/// Scaled monomial basis of P_k on one cell.
#[derive(Debug, Clone)]
pub struct CellBasis {
    pub degree: usize,
    pub origin: Point2<f64>,
    pub scale: f64,
    exponents: Vec<(u32, u32)>,
}

impl CellBasis {
    pub fn new(degree: usize, origin: Point2<f64>, scale: f64) -> Self {
        CellBasis {
            degree,
            origin,
            scale,
            exponents: monomial_exponents(degree),
        }
    }

    /// Basis anchored at a cell's centroid with its diameter as scale.
    pub fn for_cell(mesh: &Mesh, cell: usize, degree: usize) -> Self {
        let c = &mesh.cells[cell];
        CellBasis::new(degree, c.centroid, c.diameter)
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    pub fn exponents(&self) -> &[(u32, u32)] {
        &self.exponents
    }

    /// Evaluate all basis functions at p into `out` (length `dim()`).
    pub fn eval_into(&self, p: &Point2<f64>, out: &mut [f64]) {
        let xi = (p.x - self.origin.x) / self.scale;
        let eta = (p.y - self.origin.y) / self.scale;
        let k = self.degree;
        let mut xp = vec![1.0; k + 1];
        let mut yp = vec![1.0; k + 1];
        for i in 1..=k {
            xp[i] = xp[i - 1] * xi;
            yp[i] = yp[i - 1] * eta;
        }
        for (j, &(a, b)) in self.exponents.iter().enumerate() {
            out[j] = xp[a as usize] * yp[b as usize];
        }
    }

    pub fn eval(&self, p: &Point2<f64>) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(p, &mut out);
        out
    }

    /// Evaluate all basis gradients at p: `gx[j] = ∂x m_j`, `gy[j] = ∂y m_j`.
    pub fn grad_into(&self, p: &Point2<f64>, gx: &mut [f64], gy: &mut [f64]) {
        let xi = (p.x - self.origin.x) / self.scale;
        let eta = (p.y - self.origin.y) / self.scale;
        let k = self.degree;
        let mut xp = vec![1.0; k + 1];
        let mut yp = vec![1.0; k + 1];
        for i in 1..=k {
            xp[i] = xp[i - 1] * xi;
            yp[i] = yp[i - 1] * eta;
        }
        for (j, &(a, b)) in self.exponents.iter().enumerate() {
            let (a, b) = (a as usize, b as usize);
            gx[j] = if a == 0 {
                0.0
            } else {
                a as f64 * xp[a - 1] * yp[b] / self.scale
            };
            gy[j] = if b == 0 {
                0.0
            } else {
                b as f64 * xp[a] * yp[b - 1] / self.scale
            };
        }
    }
}

/// Legendre basis of P_k on an edge, in the canonical parameter t ∈ [−1,1].
#[derive(Debug, Clone)]
pub struct EdgeBasis {
    pub degree: usize,
}

impl EdgeBasis {
    pub fn new(degree: usize) -> Self {
        EdgeBasis { degree }
    }

    pub fn dim(&self) -> usize {
        self.degree + 1
    }

    /// Evaluate P_0(t) … P_k(t) into `out`.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        out[0] = 1.0;
        if self.degree >= 1 {
            out[1] = t;
        }
        for j in 1..self.degree {
            out[j + 1] = ((2 * j + 1) as f64 * t * out[j] - j as f64 * out[j - 1]) / (j + 1) as f64;
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, &mut out);
        out
    }
}

/// Accumulate the upper triangle and mirror, so the result is exactly
/// symmetric as stored.
fn symmetric_mass(values_at_q: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let dim = values_at_q.nrows();
    let mut m = DMatrix::zeros(dim, dim);
    for (q, &w) in weights.iter().enumerate() {
        let col = values_at_q.column(q);
        for i in 0..dim {
            let wi = w * col[i];
            for j in i..dim {
                m[(i, j)] += wi * col[j];
            }
        }
    }
    for i in 0..dim {
        for j in 0..i {
            m[(i, j)] = m[(j, i)];
        }
    }
    m
}

/// Mass matrix of a cell basis under a cell rule (rule must be exact to 2k).
pub fn cell_mass_matrix(basis: &CellBasis, rule: &CellRule) -> DMatrix<f64> {
    let mut vals = DMatrix::zeros(basis.dim(), rule.points.len());
    let mut buf = vec![0.0; basis.dim()];
    for (q, p) in rule.points.iter().enumerate() {
        basis.eval_into(p, &mut buf);
        vals.column_mut(q).copy_from_slice(&buf);
    }
    symmetric_mass(&vals, &rule.weights)
}

/// Mass matrix of an edge basis under an edge rule; diagonal h_e/(2j+1) up to
/// rounding.
pub fn edge_mass_matrix(basis: &EdgeBasis, rule: &EdgeRule) -> DMatrix<f64> {
    let mut vals = DMatrix::zeros(basis.dim(), rule.params.len());
    let mut buf = vec![0.0; basis.dim()];
    for (q, &t) in rule.params.iter().enumerate() {
        basis.eval_into(t, &mut buf);
        vals.column_mut(q).copy_from_slice(&buf);
    }
    symmetric_mass(&vals, &rule.weights)
}

/// Cholesky factorization that reports failure as a [`PolyError::NotSpd`].
pub fn spd_cholesky(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>, PolyError> {
    Cholesky::new(m.clone()).ok_or(PolyError::NotSpd)
}
