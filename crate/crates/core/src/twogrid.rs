//! Two-grid solution of the quasi-linear scheme: Newton on a coarse mesh,
//! then a single linear solve on the fine mesh with the diffusion coefficient
//! frozen at the coarse interior solution a(u_{H,0}(x)).
//!
//! The coarse solution is evaluated across meshes by point location plus
//! exact polynomial evaluation — no interpolation onto the fine space.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::Point2;
use thiserror::Error;

use crate::element::ElementOps;
use crate::mesh::Mesh;
use crate::poly::CellBasis;
use crate::problem::Problem;
use crate::space::{DofMap, WgFunction};
use crate::system::{self, NewtonConfig, SolveError, SolveReport};

#[derive(Debug, Error)]
pub enum TwoGridError {
    #[error("point ({x:.6}, {y:.6}) lies outside the coarse mesh")]
    PointOutside { x: f64, y: f64 },
    #[error(
        "meshes cover different domains: coarse bounding box {coarse:?}, fine bounding box {fine:?}"
    )]
    DomainMismatch { coarse: [f64; 4], fine: [f64; 4] },
    #[error(transparent)]
    Solve(#[from] SolveError),
}

const CONTAINMENT_TOL: f64 = 1e-12;

/// Uniform background bins over the mesh's bounding box, sized so a bin holds
/// a handful of cells. Correctness never depends on the bin size: a miss
/// falls back to scanning every cell.
#[derive(Debug, Clone)]
pub struct PointLocator {
    bbox: [f64; 4], // x0, y0, x1, y1
    nx: usize,
    ny: usize,
    bins: Vec<Vec<usize>>,
    /// Uniform n×n rectangular grid shortcut, when the mesh advertises one.
    rect_n: Option<usize>,
}

fn mesh_bbox(mesh: &Mesh) -> [f64; 4] {
    let mut bb = [
        f64::INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::NEG_INFINITY,
    ];
    for v in &mesh.vertices {
        bb[0] = bb[0].min(v.x);
        bb[1] = bb[1].min(v.y);
        bb[2] = bb[2].max(v.x);
        bb[3] = bb[3].max(v.y);
    }
    bb
}

impl PointLocator {
    pub fn new(mesh: &Mesh) -> Self {
        let bbox = mesh_bbox(mesh);
        let n_cells = mesh.cells.len();
        let side = ((n_cells as f64 / 4.0).sqrt().ceil() as usize).max(1);
        let (nx, ny) = (side, side);
        let mut bins = vec![Vec::new(); nx * ny];
        let wx = (bbox[2] - bbox[0]).max(f64::MIN_POSITIVE);
        let wy = (bbox[3] - bbox[1]).max(f64::MIN_POSITIVE);
        for (ci, cell) in mesh.cells.iter().enumerate() {
            let mut cb = [
                f64::INFINITY,
                f64::INFINITY,
                f64::NEG_INFINITY,
                f64::NEG_INFINITY,
            ];
            for &v in &cell.vertices {
                let p = mesh.vertices[v];
                cb[0] = cb[0].min(p.x);
                cb[1] = cb[1].min(p.y);
                cb[2] = cb[2].max(p.x);
                cb[3] = cb[3].max(p.y);
            }
            let i0 =
                (((cb[0] - bbox[0]) / wx * nx as f64).floor() as isize).clamp(0, nx as isize - 1);
            let i1 =
                (((cb[2] - bbox[0]) / wx * nx as f64).floor() as isize).clamp(0, nx as isize - 1);
            let j0 =
                (((cb[1] - bbox[1]) / wy * ny as f64).floor() as isize).clamp(0, ny as isize - 1);
            let j1 =
                (((cb[3] - bbox[1]) / wy * ny as f64).floor() as isize).clamp(0, ny as isize - 1);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    bins[j as usize * nx + i as usize].push(ci);
                }
            }
        }
        // Cells were inserted in ascending order, so each bin is sorted and
        // the first containment hit is automatically the lowest cell index.
        PointLocator {
            bbox,
            nx,
            ny,
            bins,
            rect_n: mesh.rect_size(),
        }
    }

    /// Cell containing the point (closed cells, tolerance 1e-12). A point on
    /// a shared edge resolves to the lowest adjacent cell index.
    pub fn locate(&self, mesh: &Mesh, x: f64, y: f64) -> Result<usize, TwoGridError> {
        if let Some(n) = self.rect_n {
            return Ok(rect_locate(n, x, y));
        }
        let wx = (self.bbox[2] - self.bbox[0]).max(f64::MIN_POSITIVE);
        let wy = (self.bbox[3] - self.bbox[1]).max(f64::MIN_POSITIVE);
        let i = (((x - self.bbox[0]) / wx * self.nx as f64).floor() as isize)
            .clamp(0, self.nx as isize - 1) as usize;
        let j = (((y - self.bbox[1]) / wy * self.ny as f64).floor() as isize)
            .clamp(0, self.ny as isize - 1) as usize;
        for &ci in &self.bins[j * self.nx + i] {
            if point_in_cell(mesh, ci, x, y, CONTAINMENT_TOL) {
                return Ok(ci);
            }
        }
        // Bin boundaries are inexact; a full scan settles stragglers.
        for ci in 0..mesh.cells.len() {
            if point_in_cell(mesh, ci, x, y, CONTAINMENT_TOL) {
                return Ok(ci);
            }
        }
        Err(TwoGridError::PointOutside { x, y })
    }
}

/// Index arithmetic for the uniform n×n grid of the unit square. A coordinate
/// exactly on an interior grid line snaps to the lower cell, which is the
/// lowest adjacent index in row-major order.
fn rect_locate(n: usize, x: f64, y: f64) -> usize {
    let snap = |t: f64| -> usize {
        let s = t * n as f64;
        let mut i = s.floor() as isize;
        if i as f64 == s && i > 0 {
            i -= 1;
        }
        i.clamp(0, n as isize - 1) as usize
    };
    snap(y) * n + snap(x)
}

/// Closed point-in-polygon test: true if the point is inside (even–odd rule)
/// or within `tol` of the boundary.
fn point_in_cell(mesh: &Mesh, cell: usize, x: f64, y: f64, tol: f64) -> bool {
    let verts = &mesh.cells[cell].vertices;
    let m = verts.len();
    for i in 0..m {
        let a = mesh.vertices[verts[i]];
        let b = mesh.vertices[verts[(i + 1) % m]];
        if dist_to_segment(x, y, &a, &b) <= tol {
            return true;
        }
    }
    let mut inside = false;
    for i in 0..m {
        let a = mesh.vertices[verts[i]];
        let b = mesh.vertices[verts[(i + 1) % m]];
        if (a.y > y) != (b.y > y) {
            let t = (y - a.y) / (b.y - a.y);
            if x < a.x + t * (b.x - a.x) {
                inside = !inside;
            }
        }
    }
    inside
}

fn dist_to_segment(x: f64, y: f64, a: &Point2<f64>, b: &Point2<f64>) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((x - a.x) * dx + (y - a.y) * dy) / len2).clamp(0.0, 1.0)
    };
    let (px, py) = (a.x + t * dx, a.y + t * dy);
    ((x - px).powi(2) + (y - py).powi(2)).sqrt()
}

/// A solved coarse function packaged for cross-mesh evaluation of its
/// interior polynomial u₀.
#[derive(Debug, Clone)]
pub struct CoarseSolution {
    pub u: WgFunction,
    locator: PointLocator,
    bases: Vec<CellBasis>,
}

impl CoarseSolution {
    pub fn new(mesh: &Mesh, u: WgFunction) -> Self {
        let bases = (0..mesh.cells.len())
            .map(|ci| CellBasis::for_cell(mesh, ci, u.dofmap.k))
            .collect();
        CoarseSolution {
            u,
            locator: PointLocator::new(mesh),
            bases,
        }
    }

    /// Evaluate the interior polynomial u₀ at a point (edge coefficients are
    /// never consulted). Points on shared edges use the tie-break cell.
    pub fn eval0(&self, mesh: &Mesh, x: f64, y: f64) -> Result<f64, TwoGridError> {
        let ci = self.locator.locate(mesh, x, y)?;
        let dm = &self.u.dofmap;
        let vals = self.bases[ci].eval(&Point2::new(x, y));
        let rng = dm.cell_range(ci);
        Ok((0..dm.cell_dim)
            .map(|j| self.u.coeffs[rng.start + j] * vals[j])
            .sum())
    }
}

/// A coarse/fine mesh pair sharing the same domain.
#[derive(Debug)]
pub struct GridPair {
    pub coarse: Mesh,
    pub fine: Mesh,
    pub warnings: Vec<String>,
}

impl GridPair {
    /// Validates that both meshes cover the same bounding box. A coarse mesh
    /// that is not actually coarser (H ≤ h) is legal — it degenerates to the
    /// plain frozen-coefficient solve — but earns a warning.
    pub fn new(coarse: Mesh, fine: Mesh) -> Result<Self, TwoGridError> {
        let cb = mesh_bbox(&coarse);
        let fb = mesh_bbox(&fine);
        if cb.iter().zip(&fb).any(|(c, f)| (c - f).abs() > 1e-9) {
            return Err(TwoGridError::DomainMismatch {
                coarse: cb,
                fine: fb,
            });
        }
        let mut warnings = Vec::new();
        let (hc, hf) = (coarse.h_max(), fine.h_max());
        if hc <= hf {
            warnings.push(format!(
                "coarse mesh (H = {hc:.4}) is not coarser than the fine mesh (h = {hf:.4})"
            ));
        }
        Ok(GridPair {
            coarse,
            fine,
            warnings,
        })
    }
}

/// Timings and diagnostics of the two phases.
#[derive(Debug, Clone, Default)]
pub struct TwoGridReport {
    /// Newton report of the coarse solve.
    pub coarse: SolveReport,
    pub seconds_fine_assembly: f64,
    pub seconds_fine_linear: f64,
    pub seconds_total: f64,
    pub warnings: Vec<String>,
}

/// Two-step solve: Newton on the coarse mesh, then one frozen-coefficient
/// linear solve on the fine mesh.
pub fn two_grid_solve(
    problem: &Problem,
    pair: &GridPair,
    k: usize,
    config: &NewtonConfig,
) -> Result<(WgFunction, TwoGridReport), TwoGridError> {
    let t0 = Instant::now();
    let mut report = TwoGridReport {
        warnings: pair.warnings.clone(),
        ..TwoGridReport::default()
    };

    let (u_coarse, coarse_report) = system::newton_solve(problem, &pair.coarse, k, config)?;
    report.coarse = coarse_report;
    let coarse = CoarseSolution::new(&pair.coarse, u_coarse);

    let ta = Instant::now();
    let dofmap = Arc::new(DofMap::new(&pair.fine, k));
    let ops = ElementOps::build(&pair.fine, dofmap.clone()).map_err(SolveError::from)?;
    let w0 = |x: f64, y: f64| -> f64 {
        coarse
            .eval0(&pair.coarse, x, y)
            .expect("fine quadrature point must lie inside the coarse mesh (same domain)")
    };
    let sys = system::assemble_frozen(&w0, problem, &pair.fine, &ops)?;
    report.seconds_fine_assembly = ta.elapsed().as_secs_f64();

    let tl = Instant::now();
    let x = system::solve_linear(&sys, config.linear_tol)?;
    report.seconds_fine_linear = tl.elapsed().as_secs_f64();

    let mut coeffs = system::expand_free(&dofmap, &x);
    let fixed = system::apply_dirichlet(problem, &pair.fine, &dofmap);
    coeffs += fixed;
    let u = WgFunction::from_coeffs(dofmap, coeffs);
    report.seconds_total = t0.elapsed().as_secs_f64();
    Ok((u, report))
}

/// Convenience wrapper: locate a point in a mesh without keeping the locator.
pub fn locate_point(mesh: &Mesh, x: f64, y: f64) -> Result<usize, TwoGridError> {
    PointLocator::new(mesh).locate(mesh, x, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rect_location_uses_index_arithmetic() {
        let mesh = Mesh::rectangular(2).unwrap();
        assert_eq!(locate_point(&mesh, 0.3, 0.8).unwrap(), 2);
        assert_eq!(locate_point(&mesh, 0.0, 0.0).unwrap(), 0);
        assert_eq!(locate_point(&mesh, 1.0, 1.0).unwrap(), 3);
        // On the shared vertical line x = 1/2: lower (left) cell wins.
        assert_eq!(locate_point(&mesh, 0.5, 0.25).unwrap(), 0);
        assert_eq!(locate_point(&mesh, 0.5, 0.75).unwrap(), 2);
    }

    #[test]
    fn perturbed_mesh_location_ties_break_low() {
        let mesh = Mesh::perturbed_quad(3, 0.2, 11).unwrap();
        let locator = PointLocator::new(&mesh);
        // Every cell centroid must locate to its own cell.
        for (ci, cell) in mesh.cells.iter().enumerate() {
            let found = locator
                .locate(&mesh, cell.centroid.x, cell.centroid.y)
                .unwrap();
            assert_eq!(found, ci);
        }
        // A shared vertex resolves to the lowest adjacent cell.
        let v = mesh.cells[4].vertices[0];
        let p = mesh.vertices[v];
        let found = locator.locate(&mesh, p.x, p.y).unwrap();
        let lowest = mesh
            .cells
            .iter()
            .position(|c| c.vertices.contains(&v))
            .unwrap();
        assert_eq!(found, lowest);
    }

    #[test]
    fn outside_point_is_rejected() {
        let mesh = Mesh::perturbed_quad(2, 0.1, 5).unwrap();
        let locator = PointLocator::new(&mesh);
        assert!(matches!(
            locator.locate(&mesh, 1.5, 0.5),
            Err(TwoGridError::PointOutside { .. })
        ));
    }
}
