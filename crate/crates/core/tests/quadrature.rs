//! Exactness and validity of the polygon and segment quadrature rules.

use nalgebra::Point2;
use wg_core::mesh::Mesh;
use wg_core::poly::{cell_mass_matrix, edge_mass_matrix, CellBasis, EdgeBasis};
use wg_core::quad::{
    self, cell_quadrature, edge_quadrature, polygon_quadrature, segment_quadrature, QuadError,
};
use wg_core::rng::Lcg64;

fn integrate_cell(rule: &quad::CellRule, f: impl Fn(f64, f64) -> f64) -> f64 {
    rule.points
        .iter()
        .zip(&rule.weights)
        .map(|(p, w)| w * f(p.x, p.y))
        .sum()
}

fn integrate_edge(rule: &quad::EdgeRule, f: impl Fn(f64, f64) -> f64) -> f64 {
    rule.points
        .iter()
        .zip(&rule.weights)
        .map(|(p, w)| w * f(p.x, p.y))
        .sum()
}

/// ∫₀¹∫₀¹ xᵃyᵇ = 1/((a+1)(b+1)).
fn square_monomial(a: u32, b: u32) -> f64 {
    1.0 / ((a as f64 + 1.0) * (b as f64 + 1.0))
}

#[test]
fn unit_square_monomials() {
    let mesh = Mesh::rectangular(1).unwrap();
    let r0 = cell_quadrature(&mesh, 0, 0).unwrap();
    assert!((integrate_cell(&r0, |_, _| 1.0) - 1.0).abs() < 1e-13);
    let r2 = cell_quadrature(&mesh, 0, 2).unwrap();
    assert!((integrate_cell(&r2, |x, _| x * x) - 1.0 / 3.0).abs() < 1e-13);
}

#[test]
fn unit_triangle_bilinear_moment() {
    let verts = [
        Point2::new(0.0, 0.0),
        Point2::new(1.0, 0.0),
        Point2::new(0.0, 1.0),
    ];
    let centroid = Point2::new(1.0 / 3.0, 1.0 / 3.0);
    let rule = polygon_quadrature(&verts, centroid, 3).unwrap();
    assert!((integrate_cell(&rule, |x, y| x * y) - 1.0 / 24.0).abs() < 1e-13);
}

#[test]
fn edge_rule_examples() {
    let r = segment_quadrature(Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), 1).unwrap();
    assert!((integrate_edge(&r, |x, _| x) - 0.5).abs() < 1e-14);

    let r = segment_quadrature(Point2::new(0.0, 0.0), Point2::new(0.0, 2.0), 2).unwrap();
    assert!((integrate_edge(&r, |_, y| y * y) - 8.0 / 3.0).abs() < 1e-13);

    let r = segment_quadrature(Point2::new(0.0, 0.0), Point2::new(1.0, 1.0), 0).unwrap();
    assert!((integrate_edge(&r, |_, _| 1.0) - 2.0_f64.sqrt()).abs() < 1e-14);
}

#[test]
fn weights_are_positive_and_sum_to_the_measure() {
    let mesh = Mesh::perturbed_quad(3, 0.25, 31).unwrap();
    for cell in 0..mesh.cells.len() {
        for degree in [0, 3, 7, 12] {
            let rule = cell_quadrature(&mesh, cell, degree).unwrap();
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            let sum: f64 = rule.weights.iter().sum();
            assert!((sum - mesh.cells[cell].area).abs() < 1e-13);
        }
    }
    for edge in 0..mesh.edges.len() {
        let rule = edge_quadrature(&mesh, edge, 5).unwrap();
        assert!(rule.weights.iter().all(|&w| w > 0.0));
        let sum: f64 = rule.weights.iter().sum();
        assert!((sum - mesh.edges[edge].length).abs() < 1e-13);
    }
}

#[test]
fn degree_above_the_table_cap_is_rejected() {
    let mesh = Mesh::rectangular(1).unwrap();
    assert!(cell_quadrature(&mesh, 0, quad::MAX_DEGREE).is_ok());
    assert!(matches!(
        cell_quadrature(&mesh, 0, quad::MAX_DEGREE + 1),
        Err(QuadError::DegreeTooHigh { .. })
    ));
    assert!(matches!(
        edge_quadrature(&mesh, 0, quad::MAX_DEGREE + 1),
        Err(QuadError::DegreeTooHigh { .. })
    ));
}

#[test]
fn random_monomials_integrate_exactly_up_to_the_cap() {
    let mesh = Mesh::rectangular(1).unwrap();
    let mut rng = Lcg64::new(404);
    for _ in 0..60 {
        let degree = (rng.next_u64() % (quad::MAX_DEGREE as u64 + 1)) as usize;
        let a = (rng.next_u64() % (degree as u64 + 1)) as u32;
        let b = (rng.next_u64() % (degree as u64 + 1 - a as u64)) as u32;
        let rule = cell_quadrature(&mesh, 0, degree).unwrap();
        let got = integrate_cell(&rule, |x, y| x.powi(a as i32) * y.powi(b as i32));
        let want = square_monomial(a, b);
        assert!(
            (got - want).abs() <= 1e-12 * want.abs().max(1.0),
            "deg {degree}, x^{a} y^{b}: got {got}, want {want}"
        );
    }
}

#[test]
fn nonconvex_polygon_falls_back_to_ear_clipping() {
    // L-shaped hexagon whose centroid lies outside the fan condition for
    // some edges; its area is 3 and ∫x dA = 3/2 + ... computed below.
    let verts = [
        Point2::new(0.0, 0.0),
        Point2::new(2.0, 0.0),
        Point2::new(2.0, 1.0),
        Point2::new(1.0, 1.0),
        Point2::new(1.0, 2.0),
        Point2::new(0.0, 2.0),
    ];
    // Area centroid of the L: split into [0,2]×[0,1] and [0,1]×[1,2].
    let centroid = Point2::new((2.0 * 1.0 + 1.0 * 0.5) / 3.0, (2.0 * 0.5 + 1.0 * 1.5) / 3.0);
    let rule = polygon_quadrature(&verts, centroid, 2).unwrap();
    assert!(rule.weights.iter().all(|&w| w > 0.0));
    let area = integrate_cell(&rule, |_, _| 1.0);
    assert!((area - 3.0).abs() < 1e-13);
    // ∫x over the L: 2·1·(x̄=1) + 1·1·(x̄=1/2) = 2.5; ∫xy likewise splits.
    assert!((integrate_cell(&rule, |x, _| x) - 2.5).abs() < 1e-13);
    assert!((integrate_cell(&rule, |x, y| x * y) - (1.0 + 0.75)).abs() < 1e-13);
}

#[test]
fn edge_mass_matrix_is_diagonal_legendre() {
    // Edge of length 2 along x: mass = diag(h_e/(2j+1)) = diag(2, 2/3).
    let mesh = Mesh::from_json(r#"{"vertices": [[0,0],[2,0],[2,2],[0,2]], "cells": [[0,1,2,3]]}"#)
        .unwrap();
    let edge = (0..mesh.edges.len())
        .find(|&e| {
            let (p, q) = mesh.edge_endpoints(e);
            p.y == 0.0 && q.y == 0.0
        })
        .unwrap();
    let basis = EdgeBasis::new(1);
    let rule = edge_quadrature(&mesh, edge, 2).unwrap();
    let m = edge_mass_matrix(&basis, &rule);
    assert!((m[(0, 0)] - 2.0).abs() < 1e-13);
    assert!((m[(1, 1)] - 2.0 / 3.0).abs() < 1e-13);
    assert!(m[(0, 1)].abs() < 1e-14 && m[(1, 0)].abs() < 1e-14);
}

#[test]
fn cell_mass_matrix_examples() {
    let mesh = Mesh::rectangular(1).unwrap();
    // k = 0: single constant basis function, mass = area.
    let basis = CellBasis::for_cell(&mesh, 0, 0);
    let rule = cell_quadrature(&mesh, 0, 0).unwrap();
    let m = cell_mass_matrix(&basis, &rule);
    assert_eq!(m.nrows(), 1);
    assert!((m[(0, 0)] - 1.0).abs() < 1e-14);

    // Scaled monomials keep the mass matrix condition number independent of
    // the mesh size: compare a unit cell against a 1/64 cell.
    let fine = Mesh::rectangular(64).unwrap();
    for (mesh, cell) in [(&mesh, 0usize), (&fine, 0usize)] {
        let basis = CellBasis::for_cell(mesh, cell, 2);
        let rule = cell_quadrature(mesh, cell, 4).unwrap();
        let m = cell_mass_matrix(&basis, &rule);
        let sym = m.clone().symmetric_eigen();
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for &ev in sym.eigenvalues.iter() {
            lo = lo.min(ev);
            hi = hi.max(ev);
        }
        assert!(lo > 0.0, "mass matrix must be positive definite");
        let cond = hi / lo;
        assert!(cond < 1e3, "condition number {cond:.1} too large");
    }
}

#[test]
fn gauss_points_match_the_degree_contract() {
    // ⌈(degree+1)/2⌉ points: degree 0,1 → 1 point; 2,3 → 2; ...; 12 → 7.
    let mesh = Mesh::rectangular(1).unwrap();
    for (deg, n) in [(0, 1), (1, 1), (2, 2), (3, 2), (11, 6), (12, 7)] {
        let rule = edge_quadrature(&mesh, 0, deg).unwrap();
        assert_eq!(rule.points.len(), n, "degree {deg}");
    }
}
