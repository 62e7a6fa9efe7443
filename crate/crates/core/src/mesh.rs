//! 2D polytopal meshes: generation, JSON import, topology, and geometry.
//!
//! Cells are simple polygons stored counter-clockwise. Edges are deduplicated
//! by their unordered vertex pair; the canonical direction of an edge runs
//! from the lower vertex index to the higher, and both adjacent cells see the
//! same edge polynomial in that direction. Outward normals are stored per
//! cell-edge incidence.

use nalgebra::{Point2, Vector2};
use serde::Deserialize;
use std::collections::HashMap;
use thiserror::Error;

use crate::rng::Lcg64;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh has no cells")]
    Empty,
    #[error("grid size must be at least 1")]
    ZeroSize,
    #[error("perturbation fraction {0} must lie in [0, 0.5)")]
    BadPerturbation(f64),
    #[error("cell {cell} has fewer than 3 vertices")]
    TooFewVertices { cell: usize },
    #[error("cell {cell} lists vertex {vertex} more than once")]
    RepeatedVertex { cell: usize, vertex: usize },
    #[error("cell {cell} references vertex {vertex}, but the mesh has only {n_vertices} vertices")]
    VertexOutOfRange {
        cell: usize,
        vertex: usize,
        n_vertices: usize,
    },
    #[error("cell {cell} has (near-)zero area")]
    DegenerateCell { cell: usize },
    #[error("cell {cell} is self-intersecting")]
    SelfIntersecting { cell: usize },
    #[error("edge ({a},{b}) is traversed in the same direction by two cells (inconsistent orientation or >2 adjacent cells)")]
    BadEdgeTopology { a: usize, b: usize },
    #[error("mesh JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// One polygonal cell. `edges[i]` joins `vertices[i]` to `vertices[(i+1)%m]`,
/// and `normals[i]` is the unit outward normal on that edge.
#[derive(Debug, Clone)]
pub struct Cell {
    pub vertices: Vec<usize>,
    pub edges: Vec<usize>,
    pub normals: Vec<Vector2<f64>>,
    pub area: f64,
    pub centroid: Point2<f64>,
    /// Cell diameter h_K: the maximum pairwise vertex distance.
    pub diameter: f64,
}

/// One mesh edge. `left` is the cell that traverses the edge in its canonical
/// (low index → high index) direction within its CCW cycle; `right` the cell
/// traversing it backwards. Boundary edges have exactly one neighbour.
#[derive(Debug, Clone)]
pub struct Edge {
    pub vertices: (usize, usize),
    pub left: Option<usize>,
    pub right: Option<usize>,
    pub length: f64,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.left.is_none() || self.right.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Point2<f64>>,
    pub cells: Vec<Cell>,
    pub edges: Vec<Edge>,
    /// Number of imported cells whose orientation had to be reversed.
    pub reversed_cells: usize,
    rect_n: Option<usize>,
}

#[derive(Deserialize)]
struct MeshFile {
    vertices: Vec<[f64; 2]>,
    cells: Vec<Vec<usize>>,
    // unknown fields are ignored by serde's default behaviour
}

impl Mesh {
    /// Uniform n×n grid of squares on the unit square, cells in row-major
    /// order (row = y index).
    pub fn rectangular(n: usize) -> Result<Mesh, MeshError> {
        if n == 0 {
            return Err(MeshError::ZeroSize);
        }
        let (vertices, cells) = unit_grid(n);
        let mut mesh = Mesh::assemble(vertices, cells)?;
        mesh.rect_n = Some(n);
        Ok(mesh)
    }

    /// n×n quadrilateral mesh whose interior grid vertices are displaced by a
    /// seeded pseudo-random offset of magnitude ≤ delta/n per coordinate.
    /// Boundary vertices stay put, so the mesh still tiles the unit square.
    pub fn perturbed_quad(n: usize, delta: f64, seed: u64) -> Result<Mesh, MeshError> {
        if n == 0 {
            return Err(MeshError::ZeroSize);
        }
        if !(0.0..0.5).contains(&delta) {
            return Err(MeshError::BadPerturbation(delta));
        }
        let (mut vertices, cells) = unit_grid(n);
        let mut rng = Lcg64::new(seed);
        // Fixed draw order (row-major over interior vertices, dx before dy)
        // is part of the reproducibility contract.
        for j in 1..n {
            for i in 1..n {
                let dx = rng.next_symmetric() * delta / n as f64;
                let dy = rng.next_symmetric() * delta / n as f64;
                let v = &mut vertices[j * (n + 1) + i];
                v.x += dx;
                v.y += dy;
            }
        }
        Mesh::assemble(vertices, cells)
    }

    /// Import a mesh from JSON: `{"vertices": [[x,y],...], "cells": [[i0,...],...]}`.
    /// Topology is derived, never read. Clockwise cells are reversed and
    /// counted in [`Mesh::reversed_cells`].
    pub fn from_json(text: &str) -> Result<Mesh, MeshError> {
        let file: MeshFile = serde_json::from_str(text)?;
        let vertices = file
            .vertices
            .into_iter()
            .map(|[x, y]| Point2::new(x, y))
            .collect();
        Mesh::assemble(vertices, file.cells)
    }

    /// Build a mesh from raw vertex coordinates and per-cell vertex lists.
    pub fn from_parts(
        vertices: Vec<Point2<f64>>,
        cells: Vec<Vec<usize>>,
    ) -> Result<Mesh, MeshError> {
        Mesh::assemble(vertices, cells)
    }

    /// For meshes built by [`Mesh::rectangular`], the grid size n.
    pub fn rect_size(&self) -> Option<usize> {
        self.rect_n
    }

    /// Largest cell diameter, the mesh size h.
    pub fn h_max(&self) -> f64 {
        self.cells.iter().map(|c| c.diameter).fold(0.0, f64::max)
    }

    pub fn boundary_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| e.is_boundary()).count()
    }

    /// Endpoints of an edge in its canonical direction.
    pub fn edge_endpoints(&self, edge: usize) -> (Point2<f64>, Point2<f64>) {
        let (a, b) = self.edges[edge].vertices;
        (self.vertices[a], self.vertices[b])
    }

    fn assemble(vertices: Vec<Point2<f64>>, mut cells: Vec<Vec<usize>>) -> Result<Mesh, MeshError> {
        if cells.is_empty() {
            return Err(MeshError::Empty);
        }
        let nv = vertices.len();
        let mut reversed = 0usize;
        for (ci, list) in cells.iter_mut().enumerate() {
            if list.len() < 3 {
                return Err(MeshError::TooFewVertices { cell: ci });
            }
            for &v in list.iter() {
                if v >= nv {
                    return Err(MeshError::VertexOutOfRange {
                        cell: ci,
                        vertex: v,
                        n_vertices: nv,
                    });
                }
            }
            let mut seen = list.clone();
            seen.sort_unstable();
            for w in seen.windows(2) {
                if w[0] == w[1] {
                    return Err(MeshError::RepeatedVertex {
                        cell: ci,
                        vertex: w[0],
                    });
                }
            }
            if self_intersects(&vertices, list) {
                return Err(MeshError::SelfIntersecting { cell: ci });
            }
            let area2 = signed_area2(&vertices, list);
            let scale = polygon_diameter(&vertices, list);
            if area2.abs() <= 1e-14 * scale * scale {
                return Err(MeshError::DegenerateCell { cell: ci });
            }
            if area2 < 0.0 {
                list.reverse();
                reversed += 1;
            }
        }

        // Deduplicate edges; index by first encounter while scanning cells in
        // order so edge numbering is deterministic.
        let mut edge_ids: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        for (ci, list) in cells.iter().enumerate() {
            let m = list.len();
            for i in 0..m {
                let a = list[i];
                let b = list[(i + 1) % m];
                let key = (a.min(b), a.max(b));
                let eid = *edge_ids.entry(key).or_insert_with(|| {
                    edges.push(Edge {
                        vertices: key,
                        left: None,
                        right: None,
                        length: (vertices[key.1] - vertices[key.0]).norm(),
                    });
                    edges.len() - 1
                });
                let slot = if a < b {
                    &mut edges[eid].left
                } else {
                    &mut edges[eid].right
                };
                if slot.is_some() {
                    return Err(MeshError::BadEdgeTopology { a: key.0, b: key.1 });
                }
                *slot = Some(ci);
            }
        }

        let mut built = Vec::with_capacity(cells.len());
        for list in &cells {
            let m = list.len();
            let mut cell_edges = Vec::with_capacity(m);
            let mut normals = Vec::with_capacity(m);
            for i in 0..m {
                let a = list[i];
                let b = list[(i + 1) % m];
                let key = (a.min(b), a.max(b));
                cell_edges.push(edge_ids[&key]);
                let d = vertices[b] - vertices[a];
                // CCW traversal keeps the interior on the left, so the
                // outward normal is the direction rotated -90°.
                normals.push(Vector2::new(d.y, -d.x).normalize());
            }
            let area = signed_area2(&vertices, list) / 2.0;
            built.push(Cell {
                vertices: list.clone(),
                edges: cell_edges,
                normals,
                area,
                centroid: polygon_centroid(&vertices, list, area),
                diameter: polygon_diameter(&vertices, list),
            });
        }

        Ok(Mesh {
            vertices,
            cells: built,
            edges,
            reversed_cells: reversed,
            rect_n: None,
        })
    }
}

fn unit_grid(n: usize) -> (Vec<Point2<f64>>, Vec<Vec<usize>>) {
    let h = 1.0 / n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(Point2::new(i as f64 * h, j as f64 * h));
        }
    }
    let mut cells = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let v0 = j * (n + 1) + i;
            cells.push(vec![v0, v0 + 1, v0 + n + 2, v0 + n + 1]);
        }
    }
    (vertices, cells)
}

/// Twice the signed area (shoelace); positive for CCW.
fn signed_area2(vertices: &[Point2<f64>], list: &[usize]) -> f64 {
    let m = list.len();
    let mut s = 0.0;
    for i in 0..m {
        let p = vertices[list[i]];
        let q = vertices[list[(i + 1) % m]];
        s += p.x * q.y - q.x * p.y;
    }
    s
}

fn polygon_centroid(vertices: &[Point2<f64>], list: &[usize], area: f64) -> Point2<f64> {
    let m = list.len();
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..m {
        let p = vertices[list[i]];
        let q = vertices[list[(i + 1) % m]];
        let w = p.x * q.y - q.x * p.y;
        cx += (p.x + q.x) * w;
        cy += (p.y + q.y) * w;
    }
    Point2::new(cx / (6.0 * area), cy / (6.0 * area))
}

fn polygon_diameter(vertices: &[Point2<f64>], list: &[usize]) -> f64 {
    let mut d: f64 = 0.0;
    for (i, &a) in list.iter().enumerate() {
        for &b in &list[i + 1..] {
            d = d.max((vertices[a] - vertices[b]).norm());
        }
    }
    d
}

fn cross(o: Point2<f64>, a: Point2<f64>, b: Point2<f64>) -> f64 {
    (a - o).perp(&(b - o))
}

/// Proper or touching intersection between segments (p,q) and (r,s),
/// excluding shared endpoints (the caller skips adjacent edges).
fn segments_intersect(p: Point2<f64>, q: Point2<f64>, r: Point2<f64>, s: Point2<f64>) -> bool {
    let d1 = cross(p, q, r);
    let d2 = cross(p, q, s);
    let d3 = cross(r, s, p);
    let d4 = cross(r, s, q);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |d: f64, a: Point2<f64>, b: Point2<f64>, c: Point2<f64>| {
        d == 0.0
            && c.x <= a.x.max(b.x)
            && c.x >= a.x.min(b.x)
            && c.y <= a.y.max(b.y)
            && c.y >= a.y.min(b.y)
    };
    on(d1, p, q, r) || on(d2, p, q, s) || on(d3, r, s, p) || on(d4, r, s, q)
}

fn self_intersects(vertices: &[Point2<f64>], list: &[usize]) -> bool {
    let m = list.len();
    for i in 0..m {
        for j in (i + 1)..m {
            // skip the shared-vertex neighbours (and the wrap-around pair)
            if j == i + 1 || (i == 0 && j == m - 1) {
                continue;
            }
            let p = vertices[list[i]];
            let q = vertices[list[(i + 1) % m]];
            let r = vertices[list[j]];
            let s = vertices[list[(j + 1) % m]];
            if segments_intersect(p, q, r, s) {
                return true;
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bowtie() {
        let vertices = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
            Point2::new(1.0, 1.0),
        ];
        // 0-1-2-3 crosses itself (bowtie)
        let err = Mesh::from_parts(vertices, vec![vec![0, 1, 2, 3]]).unwrap_err();
        assert!(matches!(err, MeshError::SelfIntersecting { cell: 0 }));
    }

    #[test]
    fn centroid_of_square_is_center() {
        let mesh = Mesh::rectangular(1).unwrap();
        let c = mesh.cells[0].centroid;
        assert!((c.x - 0.5).abs() < 1e-15 && (c.y - 0.5).abs() < 1e-15);
    }
}
