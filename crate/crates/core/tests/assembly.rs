//! End-to-end assembly and Newton tests on manufactured problems.

use std::sync::Arc;

use nalgebra::DVector;
use wg_core::analysis;
use wg_core::element::ElementOps;
use wg_core::mesh::Mesh;
use wg_core::problem::Problem;
use wg_core::rng::Lcg64;
use wg_core::space::{DofMap, WgFunction};
use wg_core::system::{self, NewtonConfig, SolutionFile, SolveError};

/// Linear patch problem: a ≡ 1, u a polynomial, f = −Δu.
fn patch_problem(
    u: impl Fn(f64, f64) -> f64 + Send + Sync + Copy + 'static,
    neg_lap: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
) -> Problem {
    Problem {
        u_exact: Some(Arc::new(u)),
        ..Problem::poisson(Arc::new(neg_lap), Arc::new(u))
    }
}

fn p1_patch() -> Problem {
    patch_problem(|x, y| 1.0 + 2.0 * x - 3.0 * y, |_, _| 0.0)
}

fn p2_patch() -> Problem {
    // u = x² + xy − y² + x − 2y, Δu = 2 + 0 − 2 ... use u with nonzero Δ:
    // u = x² + y², f = −Δu = −4.
    patch_problem(|x, y| x * x + y * y, |_, _| -4.0)
}

/// Nonlinear manufactured case: a(u) = 1 + u, u = x(1−x)·y(1−y).
/// f = −(1+u)Δu − |∇u|² with Δu = −2(X+Y), X = x−x², Y = y−y².
fn nonlinear_bubble() -> Problem {
    let u = |x: f64, y: f64| (x - x * x) * (y - y * y);
    Problem {
        a: Arc::new(|_, _, u| 1.0 + u),
        a_u: Arc::new(|_, _, _| 1.0),
        f: Arc::new(move |x, y| {
            let (xx, yy) = (x - x * x, y - y * y);
            let lap = -2.0 * (xx + yy);
            let gx = (1.0 - 2.0 * x) * yy;
            let gy = xx * (1.0 - 2.0 * y);
            -(1.0 + xx * yy) * lap - (gx * gx + gy * gy)
        }),
        g: Arc::new(|_, _| 0.0),
        u_exact: Some(Arc::new(u)),
        grad_u_exact: Some(Arc::new(|x, y| {
            ((1.0 - 2.0 * x) * (y - y * y), (x - x * x) * (1.0 - 2.0 * y))
        })),
        alpha0: 0.5,
        alpha1: 2.0,
        m_a: 1.0,
        u_range: (-0.5, 1.0),
    }
}

fn solve(problem: &Problem, mesh: &Mesh, k: usize) -> (WgFunction, system::SolveReport) {
    system::newton_solve(problem, mesh, k, &NewtonConfig::default()).unwrap()
}

#[test]
fn patch_solutions_reproduce_polynomials() {
    let cases: Vec<(Problem, usize)> = vec![(p1_patch(), 1), (p2_patch(), 2)];
    for (problem, k) in cases {
        for mesh in [
            Mesh::rectangular(4).unwrap(),
            Mesh::perturbed_quad(4, 0.2, 42).unwrap(),
        ] {
            let (u_h, report) = solve(&problem, &mesh, k);
            let ops = ElementOps::build(&mesh, u_h.dofmap.clone()).unwrap();
            let exact = problem.u_exact.clone().unwrap();
            let dist = analysis::energy_distance(&|x, y| exact(x, y), &u_h, &mesh, &ops);
            let l2 = analysis::l2_error(&|x, y| exact(x, y), &u_h, &mesh, &ops);
            assert!(dist <= 1e-9, "k={k}: |||Q_h u − u_h||| = {dist:.3e}");
            assert!(l2 <= 1e-10, "k={k}: L² error = {l2:.3e}");
            assert_eq!(report.iterations, 1, "linear problem takes one step");
        }
    }
}

#[test]
fn residual_vanishes_at_zero_for_homogeneous_data() {
    let problem = Problem::poisson(Arc::new(|_, _| 0.0), Arc::new(|_, _| 0.0));
    let mesh = Mesh::rectangular(3).unwrap();
    let dm = Arc::new(DofMap::new(&mesh, 1));
    let ops = ElementOps::build(&mesh, dm.clone()).unwrap();
    let u = WgFunction::zeros(dm);
    let r = system::assemble_residual(&u, &problem, &mesh, &ops).unwrap();
    assert_eq!(r.amax(), 0.0);
}

#[test]
fn residual_is_linear_in_the_source() {
    let mesh = Mesh::rectangular(3).unwrap();
    let dm = Arc::new(DofMap::new(&mesh, 1));
    let ops = ElementOps::build(&mesh, dm.clone()).unwrap();
    let u = WgFunction::zeros(dm.clone());
    let p1 = Problem::poisson(Arc::new(|x, y| x + 2.0 * y), Arc::new(|_, _| 0.0));
    let p2 = Problem::poisson(Arc::new(|x, y| 2.0 * (x + 2.0 * y)), Arc::new(|_, _| 0.0));
    let r1 = system::assemble_residual(&u, &p1, &mesh, &ops).unwrap();
    let r2 = system::assemble_residual(&u, &p2, &mesh, &ops).unwrap();
    assert!((2.0 * r1 - r2).amax() < 1e-15);
}

#[test]
fn jacobian_matches_directional_finite_differences() {
    let problem = nonlinear_bubble();
    let mesh = Mesh::rectangular(4).unwrap();
    let dm = Arc::new(DofMap::new(&mesh, 1));
    let ops = ElementOps::build(&mesh, dm.clone()).unwrap();
    let mut rng = Lcg64::new(2024);
    let fixed = system::apply_dirichlet(&problem, &mesh, &dm);
    for _ in 0..3 {
        // Random admissible state: small coefficients keep 1 + u₀ positive.
        let mut coeffs = fixed.clone();
        for fi in 0..dm.n_free() {
            coeffs[dm.global_of_free(fi)] = 0.3 * rng.next_symmetric();
        }
        let u = WgFunction::from_coeffs(dm.clone(), coeffs);
        let jac = system::assemble_jacobian(&u, &problem, &mesh, &ops).unwrap();
        let dir = DVector::from_fn(dm.n_free(), |_, _| rng.next_symmetric());
        let jd = jac.matvec(&dir);

        let h = 1e-7;
        let mut up = u.clone();
        let mut um = u.clone();
        for fi in 0..dm.n_free() {
            let g = dm.global_of_free(fi);
            up.coeffs[g] += h * dir[fi];
            um.coeffs[g] -= h * dir[fi];
        }
        let rp = system::assemble_residual(&up, &problem, &mesh, &ops).unwrap();
        let rm = system::assemble_residual(&um, &problem, &mesh, &ops).unwrap();
        let fd = (rp - rm) / (2.0 * h);
        let rel = (&jd - &fd).norm() / jd.norm();
        assert!(rel <= 1e-6, "FD mismatch: rel = {rel:.3e}");
    }
}

#[test]
fn jacobian_is_symmetric_for_linear_problems() {
    let problem = Problem::poisson(Arc::new(|_, _| 1.0), Arc::new(|_, _| 0.0));
    let mesh = Mesh::perturbed_quad(3, 0.15, 9).unwrap();
    let dm = Arc::new(DofMap::new(&mesh, 2));
    let ops = ElementOps::build(&mesh, dm.clone()).unwrap();
    let u = WgFunction::zeros(dm.clone());
    let jac = system::assemble_jacobian(&u, &problem, &mesh, &ops).unwrap();
    let mut entries = std::collections::HashMap::new();
    for &(r, c, v) in &jac.triplets {
        entries.insert((r, c), v);
    }
    for (&(r, c), &v) in &entries {
        let vt = entries.get(&(c, r)).copied().unwrap_or(0.0);
        assert!((v - vt).abs() < 1e-12, "asymmetry at ({r},{c})");
    }
}

#[test]
fn jacobian_couples_only_adjacent_dofs() {
    let problem = nonlinear_bubble();
    let mesh = Mesh::rectangular(3).unwrap();
    let dm = Arc::new(DofMap::new(&mesh, 1));
    let ops = ElementOps::build(&mesh, dm.clone()).unwrap();
    let u = WgFunction::from_coeffs(dm.clone(), system::apply_dirichlet(&problem, &mesh, &dm));
    let jac = system::assemble_jacobian(&u, &problem, &mesh, &ops).unwrap();
    // Allowed couplings: DoFs sharing a cell (interior–interior of one cell,
    // interior–edge of an adjacent edge, edge–edge through a shared cell).
    let mut allowed = std::collections::HashSet::new();
    for ci in 0..mesh.cells.len() {
        let globals = dm.cell_local_to_global(&mesh, ci);
        for &a in &globals {
            for &b in &globals {
                if let (Some(fa), Some(fb)) = (dm.free_index(a), dm.free_index(b)) {
                    allowed.insert((fa, fb));
                }
            }
        }
    }
    for &(r, c, v) in &jac.triplets {
        if v != 0.0 {
            assert!(allowed.contains(&(r, c)), "spurious coupling ({r},{c})");
        }
    }
}

#[test]
fn frozen_system_is_spd_and_w_independent_for_constant_a() {
    let problem = nonlinear_bubble();
    let mesh = Mesh::rectangular(8).unwrap();
    let dm = Arc::new(DofMap::new(&mesh, 1));
    let ops = ElementOps::build(&mesh, dm.clone()).unwrap();
    let sys = system::assemble_frozen(&|x, y| 0.2 * x * y, &problem, &mesh, &ops).unwrap();
    // Symmetry.
    let mut entries = std::collections::HashMap::new();
    for &(r, c, v) in &sys.triplets {
        entries.insert((r, c), v);
    }
    for (&(r, c), &v) in &entries {
        let vt = entries.get(&(c, r)).copied().unwrap_or(0.0);
        assert!((v - vt).abs() < 1e-12);
    }
    // Positive definiteness via random quadratic forms.
    let mut rng = Lcg64::new(7);
    for _ in 0..20 {
        let v = DVector::from_fn(sys.n, |_, _| rng.next_symmetric());
        let q = sys.matvec(&v).dot(&v);
        assert!(q > 0.0, "frozen matrix not positive definite: q = {q:.3e}");
    }

    // With constant a the matrix ignores the frozen state entirely.
    let linear = Problem::poisson(Arc::new(|_, _| 1.0), Arc::new(|_, _| 0.0));
    let s1 = system::assemble_frozen(&|_, _| -3.0, &linear, &mesh, &ops).unwrap();
    let s2 = system::assemble_frozen(&|x, _| 40.0 * x, &linear, &mesh, &ops).unwrap();
    assert_eq!(s1.triplets, s2.triplets);
}

#[test]
fn frozen_rhs_is_the_load_vector_for_homogeneous_boundaries() {
    let problem = nonlinear_bubble();
    let mesh = Mesh::rectangular(4).unwrap();
    let dm = Arc::new(DofMap::new(&mesh, 1));
    let ops = ElementOps::build(&mesh, dm.clone()).unwrap();
    let s1 = system::assemble_frozen(&|_, _| 0.0, &problem, &mesh, &ops).unwrap();
    let s2 = system::assemble_frozen(&|x, y| 0.1 * (x + y), &problem, &mesh, &ops).unwrap();
    assert!(
        (&s1.rhs - &s2.rhs).amax() < 1e-15,
        "rhs must not depend on w"
    );
}

#[test]
fn newton_converges_on_the_nonlinear_bubble() {
    let problem = nonlinear_bubble();
    let exact = problem.u_exact.clone().unwrap();
    let grad = problem.grad_u_exact.clone().unwrap();
    let mut errs = Vec::new();
    for n in [8usize, 16] {
        let mesh = Mesh::rectangular(n).unwrap();
        let (u_h, report) = solve(&problem, &mesh, 1);
        assert!(report.iterations >= 2, "problem is genuinely nonlinear");
        assert!(
            report.iterations <= 10,
            "took {} iterations",
            report.iterations
        );
        // Quadratic convergence: the last increments decrease strictly.
        let m = report.increment_norms.len();
        for w in report.increment_norms[m.saturating_sub(3)..].windows(2) {
            assert!(
                w[1] < w[0],
                "increments must shrink: {:?}",
                report.increment_norms
            );
        }
        let ops = ElementOps::build(&mesh, u_h.dofmap.clone()).unwrap();
        let h1 = analysis::h1_like_error(&|x, y| grad(x, y), &u_h, &mesh, &ops);
        let l2 = analysis::l2_error(&|x, y| exact(x, y), &u_h, &mesh, &ops);
        errs.push((h1, l2));
    }
    // First order in the energy-type norm, second order in L².
    let (h1_c, l2_c) = errs[0];
    let (h1_f, l2_f) = errs[1];
    assert!(
        h1_f < 0.65 * h1_c,
        "H1-type errors {h1_c:.3e} -> {h1_f:.3e}"
    );
    assert!(l2_f < 0.35 * l2_c, "L2 errors {l2_c:.3e} -> {l2_f:.3e}");
    assert!(h1_c < 0.1 && l2_c < 1e-2, "errors unreasonably large");
}

#[test]
fn newton_is_deterministic_and_preserves_boundary_values() {
    let problem = nonlinear_bubble();
    let mesh = Mesh::perturbed_quad(4, 0.2, 5).unwrap();
    let (u1, _) = solve(&problem, &mesh, 1);
    let (u2, _) = solve(&problem, &mesh, 1);
    assert_eq!(u1.coeffs, u2.coeffs, "repeat runs must agree bit-for-bit");

    let dm = &u1.dofmap;
    let fixed = system::apply_dirichlet(&problem, &mesh, dm);
    for e in 0..mesh.edges.len() {
        if dm.is_boundary_edge(e) {
            for g in dm.edge_range(e) {
                assert_eq!(u1.coeffs[g], fixed[g], "Dirichlet DoF {g} drifted");
            }
        }
    }
}

#[test]
fn newton_reports_positivity_violations_with_location() {
    // a(u) = 1 + u turns negative where the source forces u₀ below −1.
    let problem = Problem {
        a: Arc::new(|_, _, u| 1.0 + u),
        a_u: Arc::new(|_, _, _| 1.0),
        f: Arc::new(|_, _| -500.0),
        g: Arc::new(|_, _| 0.0),
        u_exact: None,
        grad_u_exact: None,
        alpha0: 0.1,
        alpha1: 2.9,
        m_a: 2.9,
        u_range: (-0.9, 1.9),
    };
    let mesh = Mesh::rectangular(4).unwrap();
    let err = system::newton_solve(&problem, &mesh, 1, &NewtonConfig::default()).unwrap_err();
    match err {
        SolveError::CoefficientNotPositive { x, y, .. } => {
            assert!((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y));
        }
        other => panic!("expected positivity error, got {other:?}"),
    }
}

#[test]
fn solution_file_round_trips_exactly() {
    let problem = p1_patch();
    let mesh = Mesh::rectangular(3).unwrap();
    let (u, _) = solve(&problem, &mesh, 1);
    let file = SolutionFile::from_function(&u);
    let text = serde_json::to_string(&file).unwrap();
    let back: SolutionFile = serde_json::from_str(&text).unwrap();
    let u2 = back.into_function(&mesh).unwrap();
    assert_eq!(u.coeffs, u2.coeffs);

    // Mismatched degree is rejected.
    let mut wrong = SolutionFile::from_function(&u);
    wrong.k = 2;
    assert!(matches!(
        wrong.into_function(&mesh),
        Err(SolveError::SolutionFormat(_))
    ));
}
