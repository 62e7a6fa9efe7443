//! The weak finite element space: DoF layout and functions in it.
//!
//! Global coefficient order is frozen: all cell-interior blocks first (cell
//! order, (k+1)(k+2)/2 coefficients each), then all edge blocks (edge order,
//! k+1 coefficients each). Boundary-edge coefficients are the constrained
//! DoFs; the free numbering is the order-preserving compaction of the rest.

use std::ops::Range;
use std::sync::Arc;

use nalgebra::DVector;

use crate::mesh::Mesh;

#[derive(Debug, Clone)]
pub struct DofMap {
    pub k: usize,
    pub cell_dim: usize,
    pub edge_dim: usize,
    pub n_cells: usize,
    pub n_edges: usize,
    /// Total interior (cell) coefficients.
    pub n_interior: usize,
    /// Total edge coefficients (interior and boundary edges alike).
    pub n_edge_dofs: usize,
    /// Number of constrained (boundary-edge) coefficients.
    pub n_constrained: usize,
    boundary_edge: Vec<bool>,
    free_of_global: Vec<usize>, // usize::MAX on constrained DoFs
    global_of_free: Vec<usize>,
}

impl DofMap {
    /// Lay out DoFs for degree k ≥ 1 on a mesh.
    pub fn new(mesh: &Mesh, k: usize) -> Self {
        assert!(k >= 1, "weak Galerkin spaces here need k >= 1");
        let cell_dim = (k + 1) * (k + 2) / 2;
        let edge_dim = k + 1;
        let n_cells = mesh.cells.len();
        let n_edges = mesh.edges.len();
        let n_interior = n_cells * cell_dim;
        let n_edge_dofs = n_edges * edge_dim;
        let boundary_edge: Vec<bool> = mesh.edges.iter().map(|e| e.is_boundary()).collect();
        let total = n_interior + n_edge_dofs;
        let mut free_of_global = vec![usize::MAX; total];
        let mut global_of_free = Vec::with_capacity(total);
        for (g, slot) in free_of_global[..n_interior].iter_mut().enumerate() {
            *slot = global_of_free.len();
            global_of_free.push(g);
        }
        for (e, bdry) in boundary_edge.iter().enumerate() {
            if *bdry {
                continue;
            }
            for j in 0..edge_dim {
                let g = n_interior + e * edge_dim + j;
                free_of_global[g] = global_of_free.len();
                global_of_free.push(g);
            }
        }
        let n_constrained = total - global_of_free.len();
        DofMap {
            k,
            cell_dim,
            edge_dim,
            n_cells,
            n_edges,
            n_interior,
            n_edge_dofs,
            n_constrained,
            boundary_edge,
            free_of_global,
            global_of_free,
        }
    }

    pub fn n_total(&self) -> usize {
        self.n_interior + self.n_edge_dofs
    }

    pub fn n_free(&self) -> usize {
        self.global_of_free.len()
    }

    pub fn cell_range(&self, cell: usize) -> Range<usize> {
        cell * self.cell_dim..(cell + 1) * self.cell_dim
    }

    pub fn edge_range(&self, edge: usize) -> Range<usize> {
        let start = self.n_interior + edge * self.edge_dim;
        start..start + self.edge_dim
    }

    pub fn is_boundary_edge(&self, edge: usize) -> bool {
        self.boundary_edge[edge]
    }

    /// Free index of a global DoF, or None if constrained.
    pub fn free_index(&self, global: usize) -> Option<usize> {
        let f = self.free_of_global[global];
        (f != usize::MAX).then_some(f)
    }

    pub fn global_of_free(&self, free: usize) -> usize {
        self.global_of_free[free]
    }

    /// Global indices of a cell's local DoFs: interior coefficients first,
    /// then the adjacent edges' coefficients in the cell's CCW edge order.
    pub fn cell_local_to_global(&self, mesh: &Mesh, cell: usize) -> Vec<usize> {
        let c = &mesh.cells[cell];
        let mut idx = Vec::with_capacity(self.cell_dim + c.edges.len() * self.edge_dim);
        idx.extend(self.cell_range(cell));
        for &e in &c.edges {
            idx.extend(self.edge_range(e));
        }
        idx
    }
}

/// A weak function {v₀, v_b}: coefficients of the scaled cell monomials and
/// of the edge Legendre polynomials, in the global DoF order.
#[derive(Debug, Clone)]
pub struct WgFunction {
    pub dofmap: Arc<DofMap>,
    pub coeffs: DVector<f64>,
}

impl WgFunction {
    pub fn zeros(dofmap: Arc<DofMap>) -> Self {
        let n = dofmap.n_total();
        WgFunction {
            dofmap,
            coeffs: DVector::zeros(n),
        }
    }

    pub fn from_coeffs(dofmap: Arc<DofMap>, coeffs: DVector<f64>) -> Self {
        assert_eq!(coeffs.len(), dofmap.n_total());
        WgFunction { dofmap, coeffs }
    }

    /// Gather this function's local coefficient vector on a cell.
    pub fn local_coeffs(&self, mesh: &Mesh, cell: usize) -> DVector<f64> {
        let idx = self.dofmap.cell_local_to_global(mesh, cell);
        DVector::from_iterator(idx.len(), idx.iter().map(|&g| self.coeffs[g]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_numbering_keeps_interior_first() {
        let mesh = Mesh::rectangular(2).unwrap();
        let dm = DofMap::new(&mesh, 1);
        assert_eq!(dm.n_interior, 4 * 3);
        assert_eq!(dm.n_edge_dofs, 12 * 2);
        assert_eq!(dm.n_constrained, 8 * 2);
        assert_eq!(dm.n_free(), 12 + 8);
        for g in 0..dm.n_interior {
            assert_eq!(dm.free_index(g), Some(g));
        }
        let mut last = None;
        for e in 0..dm.n_edges {
            if dm.is_boundary_edge(e) {
                for g in dm.edge_range(e) {
                    assert_eq!(dm.free_index(g), None);
                }
            } else {
                for g in dm.edge_range(e) {
                    let f = dm.free_index(g).unwrap();
                    assert!(Some(f) > last, "free numbering must preserve order");
                    last = Some(f);
                }
            }
        }
    }
}
