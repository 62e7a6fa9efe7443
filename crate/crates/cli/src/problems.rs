//! Built-in example problems, user-defined problems from JSON configs, and
//! the validation that guards both.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;
use wg_core::problem::Problem;
use wg_core::rng::Lcg64;

use crate::expr::{self, Expr, Var};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("unknown problem {0:?} (built-ins: ex1, ex2; or pass a JSON config file)")]
    UnknownName(String),
    #[error("problem config: {0}")]
    Config(#[from] serde_json::Error),
    #[error("field {field}: {source}")]
    Parse {
        field: &'static str,
        #[source]
        source: expr::ParseError,
    },
    #[error("field {field} must not depend on u")]
    UsesU { field: &'static str },
    #[error("field {field} failed to evaluate at ({x}, {y}): {source}")]
    Eval {
        field: &'static str,
        x: f64,
        y: f64,
        #[source]
        source: expr::EvalError,
    },
    #[error(
        "a({x:.4}, {y:.4}, u={u:.4}) = {value:.6} leaves the declared range [{alpha0}, {alpha1}]"
    )]
    CoefficientOutOfBounds {
        x: f64,
        y: f64,
        u: f64,
        value: f64,
        alpha0: f64,
        alpha1: f64,
    },
    #[error(
        "a_u at ({x:.4}, {y:.4}, u={u:.4}) is {value:.6} but finite differences of a give {fd:.6}"
    )]
    DerivativeMismatch {
        x: f64,
        y: f64,
        u: f64,
        value: f64,
        fd: f64,
    },
    #[error("alpha0 must be positive and alpha0 <= alpha1 (got {alpha0}, {alpha1})")]
    BadBounds { alpha0: f64, alpha1: f64 },
    #[error(
        "source f at ({x:.4}, {y:.4}) is {value:.6} but -div(a(u) grad u) of the declared exact \
         solution gives {fd:.6}"
    )]
    SourceMismatch { x: f64, y: f64, value: f64, fd: f64 },
}

/// The two classic test problems.
///
/// The first uses a(u) = 1 + u with exact solution sin(πx)sin(πy); the
/// coefficient is only positive near the solution, so its bounds metadata is
/// stated on u ∈ [−0.9, 1.9]. The second uses a(u) = 1 + sin(u)/2 with exact
/// solution φ(x)φ(y), φ(t) = t(1−t)e^{2t}; its bounds hold for every u.
pub fn builtin_problem(name: &str) -> Result<Problem, ProblemError> {
    match name {
        "ex1" => Ok(example_one()),
        "ex2" => Ok(example_two()),
        other => Err(ProblemError::UnknownName(other.to_string())),
    }
}

fn example_one() -> Problem {
    let u = |x: f64, y: f64| (PI * x).sin() * (PI * y).sin();
    Problem {
        a: Arc::new(|_, _, u| 1.0 + u),
        a_u: Arc::new(|_, _, _| 1.0),
        f: Arc::new(move |x, y| {
            let (sx, cx) = (PI * x).sin_cos();
            let (sy, cy) = (PI * y).sin_cos();
            let u = sx * sy;
            // −∇·((1+u)∇u) = 2π²u(1+u) − |∇u|², with Δu = −2π²u.
            2.0 * PI * PI * u * (1.0 + u) - PI * PI * (cx * cx * sy * sy + sx * sx * cy * cy)
        }),
        g: Arc::new(|_, _| 0.0),
        u_exact: Some(Arc::new(u)),
        grad_u_exact: Some(Arc::new(|x, y| {
            (
                PI * (PI * x).cos() * (PI * y).sin(),
                PI * (PI * x).sin() * (PI * y).cos(),
            )
        })),
        alpha0: 0.1,
        alpha1: 2.9,
        m_a: 2.9,
        u_range: (-0.9, 1.9),
    }
}

/// φ(t) = t(1−t)e^{2t}, φ′ = (1−2t²)e^{2t}, φ″ = (2−4t−4t²)e^{2t}.
fn phi(t: f64) -> f64 {
    (t - t * t) * (2.0 * t).exp()
}

fn phi_d(t: f64) -> f64 {
    (1.0 - 2.0 * t * t) * (2.0 * t).exp()
}

fn phi_dd(t: f64) -> f64 {
    (2.0 - 4.0 * t - 4.0 * t * t) * (2.0 * t).exp()
}

fn example_two() -> Problem {
    let u = |x: f64, y: f64| phi(x) * phi(y);
    Problem {
        a: Arc::new(|_, _, u| 1.0 + u.sin() / 2.0),
        a_u: Arc::new(|_, _, u| u.cos() / 2.0),
        f: Arc::new(move |x, y| {
            let uv = phi(x) * phi(y);
            let lap = phi_dd(x) * phi(y) + phi(x) * phi_dd(y);
            let grad2 = (phi_d(x) * phi(y)).powi(2) + (phi(x) * phi_d(y)).powi(2);
            -(1.0 + uv.sin() / 2.0) * lap - uv.cos() / 2.0 * grad2
        }),
        g: Arc::new(|_, _| 0.0),
        u_exact: Some(Arc::new(u)),
        grad_u_exact: Some(Arc::new(|x, y| (phi_d(x) * phi(y), phi(x) * phi_d(y)))),
        alpha0: 0.5,
        alpha1: 1.5,
        m_a: 1.5,
        u_range: (-5.0, 5.0),
    }
}

/// On-disk description of a user problem. All fields are expressions in
/// x, y (and u for the coefficient pair).
#[derive(Debug, Deserialize)]
pub struct ProblemConfig {
    pub a: String,
    pub a_u: String,
    pub f: String,
    pub g: String,
    #[serde(default)]
    pub u_exact: Option<String>,
    #[serde(default)]
    pub grad_u_exact: Option<[String; 2]>,
    pub alpha0: f64,
    pub alpha1: f64,
}

fn parse_field(field: &'static str, text: &str) -> Result<Expr, ProblemError> {
    expr::parse_expr(text).map_err(|source| ProblemError::Parse { field, source })
}

fn reject_u(field: &'static str, e: &Expr) -> Result<(), ProblemError> {
    if e.uses(Var::U) {
        Err(ProblemError::UsesU { field })
    } else {
        Ok(())
    }
}

/// Probe a pure-space expression everywhere the solver may evaluate it, so
/// domain errors surface at load time instead of mid-assembly.
fn probe(field: &'static str, e: &Expr) -> Result<(), ProblemError> {
    for i in 0..=20 {
        for j in 0..=20 {
            let (x, y) = (i as f64 / 20.0, j as f64 / 20.0);
            e.eval(x, y, 0.0).map_err(|source| ProblemError::Eval {
                field,
                x,
                y,
                source,
            })?;
        }
    }
    Ok(())
}

fn scalar_closure(e: Expr) -> Arc<dyn Fn(f64, f64) -> f64 + Send + Sync> {
    Arc::new(move |x, y| e.eval(x, y, 0.0).unwrap_or(f64::NAN))
}

/// Compile a config into a runnable problem. The coefficient bounds are
/// checked by [`validate_problem`], which the drivers run on every problem.
pub fn compile_config(text: &str) -> Result<Problem, ProblemError> {
    let config: ProblemConfig = serde_json::from_str(text)?;
    if !(config.alpha0 > 0.0 && config.alpha0 <= config.alpha1) {
        return Err(ProblemError::BadBounds {
            alpha0: config.alpha0,
            alpha1: config.alpha1,
        });
    }

    let a = parse_field("a", &config.a)?;
    let a_u = parse_field("a_u", &config.a_u)?;
    let f = parse_field("f", &config.f)?;
    let g = parse_field("g", &config.g)?;
    reject_u("f", &f)?;
    reject_u("g", &g)?;
    probe("f", &f)?;
    probe("g", &g)?;

    let u_exact = match &config.u_exact {
        Some(text) => {
            let e = parse_field("u_exact", text)?;
            reject_u("u_exact", &e)?;
            probe("u_exact", &e)?;
            Some(e)
        }
        None => None,
    };
    let grad_u_exact = match &config.grad_u_exact {
        Some([gx, gy]) => {
            let ex = parse_field("grad_u_exact[0]", gx)?;
            let ey = parse_field("grad_u_exact[1]", gy)?;
            reject_u("grad_u_exact[0]", &ex)?;
            reject_u("grad_u_exact[1]", &ey)?;
            probe("grad_u_exact[0]", &ex)?;
            probe("grad_u_exact[1]", &ey)?;
            Some((ex, ey))
        }
        None => None,
    };

    // Estimate the coefficient magnitude bound while sweeping; stored as
    // metadata only (the solver needs a and a_u themselves).
    let mut m_a: f64 = 0.0;
    let mut rng = Lcg64::new(0x9e3779b97f4a7c15);
    for _ in 0..500 {
        let x = rng.next_unit();
        let y = rng.next_unit();
        let u = -5.0 + 10.0 * rng.next_unit();
        if let (Ok(av), Ok(duv)) = (a.eval(x, y, u), a_u.eval(x, y, u)) {
            m_a = m_a.max(av.abs()).max(duv.abs());
        }
    }

    let a_expr = a;
    let au_expr = a_u;
    Ok(Problem {
        a: Arc::new(move |x, y, u| a_expr.eval(x, y, u).unwrap_or(f64::NAN)),
        a_u: Arc::new(move |x, y, u| au_expr.eval(x, y, u).unwrap_or(f64::NAN)),
        f: scalar_closure(f),
        g: scalar_closure(g),
        u_exact: u_exact.map(scalar_closure),
        grad_u_exact: grad_u_exact.map(|(ex, ey)| {
            let gx = scalar_closure(ex);
            let gy = scalar_closure(ey);
            Arc::new(move |x: f64, y: f64| (gx(x, y), gy(x, y)))
                as Arc<dyn Fn(f64, f64) -> (f64, f64) + Send + Sync>
        }),
        alpha0: config.alpha0,
        alpha1: config.alpha1,
        m_a,
        u_range: (-5.0, 5.0),
    })
}

/// Check the declared coefficient bounds and derivative on a sweep of
/// 100×100 spatial points crossed with solution values from the problem's
/// admissible range: α₀ ≤ a ≤ α₁, and a_u against central differences of a
/// (relative 1e-6).
pub fn validate_problem(problem: &Problem) -> Result<(), ProblemError> {
    if !(problem.alpha0 > 0.0 && problem.alpha0 <= problem.alpha1) {
        return Err(ProblemError::BadBounds {
            alpha0: problem.alpha0,
            alpha1: problem.alpha1,
        });
    }
    let (ulo, uhi) = problem.u_range;
    let n_u = 9;
    let slack = 1e-9 * problem.alpha1.max(1.0);
    for i in 0..100 {
        for j in 0..100 {
            let x = (i as f64 + 0.5) / 100.0;
            let y = (j as f64 + 0.5) / 100.0;
            for s in 0..n_u {
                let u = ulo + (uhi - ulo) * s as f64 / (n_u - 1) as f64;
                let av = (problem.a)(x, y, u);
                if !(av >= problem.alpha0 - slack && av <= problem.alpha1 + slack) {
                    return Err(ProblemError::CoefficientOutOfBounds {
                        x,
                        y,
                        u,
                        value: av,
                        alpha0: problem.alpha0,
                        alpha1: problem.alpha1,
                    });
                }
                let duv = (problem.a_u)(x, y, u);
                let h = 1e-6 * u.abs().max(1.0);
                let fd = ((problem.a)(x, y, u + h) - (problem.a)(x, y, u - h)) / (2.0 * h);
                if (duv - fd).abs() > 1e-6 * duv.abs().max(1.0) {
                    return Err(ProblemError::DerivativeMismatch {
                        x,
                        y,
                        u,
                        value: duv,
                        fd,
                    });
                }
            }
        }
    }
    Ok(())
}

/// Cross-check the symbolic source term against −∇·(a(u)∇u) computed by
/// central differences of the exact flux, at random interior points.
/// Requires u_exact and grad_u_exact; returns the worst relative error.
pub fn source_consistency(problem: &Problem, samples: usize, seed: u64) -> Option<f64> {
    let u = problem.u_exact.clone()?;
    let grad = problem.grad_u_exact.clone()?;
    let a = problem.a.clone();
    let flux_x = |x: f64, y: f64| a(x, y, u(x, y)) * grad(x, y).0;
    let flux_y = |x: f64, y: f64| a(x, y, u(x, y)) * grad(x, y).1;

    let mut rng = Lcg64::new(seed);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x = 0.05 + 0.9 * rng.next_unit();
        let y = 0.05 + 0.9 * rng.next_unit();
        let div = (flux_x(x + h, y) - flux_x(x - h, y)) / (2.0 * h)
            + (flux_y(x, y + h) - flux_y(x, y - h)) / (2.0 * h);
        let fv = (problem.f)(x, y);
        let rel = (fv + div).abs() / fv.abs().max(1.0);
        worst = worst.max(rel);
    }
    Some(worst)
}

/// Like [`source_consistency`] but failing loudly, for the drivers.
pub fn check_source(problem: &Problem) -> Result<(), ProblemError> {
    let u = match (problem.u_exact.clone(), problem.grad_u_exact.clone()) {
        (Some(u), Some(grad)) => (u, grad),
        _ => return Ok(()),
    };
    let (u, grad) = u;
    let a = problem.a.clone();
    let flux_x = |x: f64, y: f64| a(x, y, u(x, y)) * grad(x, y).0;
    let flux_y = |x: f64, y: f64| a(x, y, u(x, y)) * grad(x, y).1;
    let mut rng = Lcg64::new(1234);
    let h = 1e-5;
    for _ in 0..100 {
        let x = 0.05 + 0.9 * rng.next_unit();
        let y = 0.05 + 0.9 * rng.next_unit();
        let div = (flux_x(x + h, y) - flux_x(x - h, y)) / (2.0 * h)
            + (flux_y(x, y + h) - flux_y(x, y - h)) / (2.0 * h);
        let fv = (problem.f)(x, y);
        if (fv + div).abs() > 1e-5 * fv.abs().max(1.0) {
            return Err(ProblemError::SourceMismatch {
                x,
                y,
                value: fv,
                fd: -div,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_names() {
        assert!(builtin_problem("ex1").is_ok());
        assert!(builtin_problem("ex2").is_ok());
        assert!(matches!(
            builtin_problem("ex3"),
            Err(ProblemError::UnknownName(_))
        ));
    }

    #[test]
    fn first_example_worked_values() {
        let p = builtin_problem("ex1").unwrap();
        // At the center u = 1 and ∇u = 0, so f = 2π²·1·2 = 4π².
        assert!(((p.f)(0.5, 0.5) - 4.0 * PI * PI).abs() < 1e-12);
        // Boundary data vanishes.
        for t in [0.0, 0.3, 0.7, 1.0] {
            assert_eq!((p.g)(t, 0.0), 0.0);
            assert_eq!((p.u_exact.as_ref().unwrap())(0.0, t), 0.0);
        }
        assert_eq!((p.a)(0.2, 0.9, 0.5), 1.5);
    }

    #[test]
    fn second_example_worked_values() {
        let p = builtin_problem("ex2").unwrap();
        let u = p.u_exact.clone().unwrap();
        // φ(0) = φ(1) = 0 makes the trace vanish.
        for t in [0.0, 0.25, 0.75, 1.0] {
            assert!(u(0.0, t).abs() < 1e-15);
            assert!(u(1.0, t).abs() < 1e-15);
            assert!(u(t, 0.0).abs() < 1e-15);
        }
        // φ(1/2) = (1/4)e, so u(1/2,1/2) = e²/16.
        let e = std::f64::consts::E;
        assert!((u(0.5, 0.5) - e * e / 16.0).abs() < 1e-14);
    }

    #[test]
    fn builtin_sources_match_the_finite_difference_oracle() {
        for name in ["ex1", "ex2"] {
            let p = builtin_problem(name).unwrap();
            let worst = source_consistency(&p, 100, 77).unwrap();
            assert!(worst <= 1e-5, "{name}: worst relative gap {worst:.3e}");
            check_source(&p).unwrap();
        }
    }

    #[test]
    fn builtins_pass_their_own_validation() {
        for name in ["ex1", "ex2"] {
            validate_problem(&builtin_problem(name).unwrap()).unwrap();
        }
    }

    #[test]
    fn derivative_validation_catches_wrong_a_u() {
        let mut p = builtin_problem("ex1").unwrap();
        p.a_u = Arc::new(|_, _, _| 0.9);
        assert!(matches!(
            validate_problem(&p),
            Err(ProblemError::DerivativeMismatch { .. })
        ));
    }

    #[test]
    fn bounds_validation_catches_escapes() {
        let mut p = builtin_problem("ex1").unwrap();
        p.u_range = (-5.0, 5.0); // a = 1 + u dips below α₀ on this range
        assert!(matches!(
            validate_problem(&p),
            Err(ProblemError::CoefficientOutOfBounds { .. })
        ));
    }

    #[test]
    fn config_compiles_and_validates() {
        let text = r#"{
            "a": "1+u",
            "a_u": "1",
            "f": "2*pi^2*sin(pi*x)*sin(pi*y)",
            "g": "0",
            "u_exact": "sin(pi*x)*sin(pi*y)",
            "alpha0": 0.1,
            "alpha1": 2.9
        }"#;
        let p = compile_config(text).unwrap();
        assert_eq!((p.a)(0.0, 0.0, 0.5), 1.5);
        assert!(((p.u_exact.as_ref().unwrap())(0.5, 0.5) - 1.0).abs() < 1e-15);
        assert!(p.m_a >= 2.9, "metadata bound sweeps |a|, got {}", p.m_a);

        // The custom-problem validation range is u ∈ [−5, 5], where 1 + u
        // leaves [α₀, α₁]; the declared bounds are rejected.
        assert!(matches!(
            validate_problem(&p),
            Err(ProblemError::CoefficientOutOfBounds { .. })
        ));
    }

    #[test]
    fn config_rejects_bad_fields() {
        let bad_expr = r#"{"a": "1+", "a_u": "1", "f": "0", "g": "0",
                           "alpha0": 1, "alpha1": 1}"#;
        assert!(matches!(
            compile_config(bad_expr),
            Err(ProblemError::Parse { field: "a", .. })
        ));

        let f_uses_u = r#"{"a": "1", "a_u": "0", "f": "u", "g": "0",
                           "alpha0": 1, "alpha1": 1}"#;
        assert!(matches!(
            compile_config(f_uses_u),
            Err(ProblemError::UsesU { field: "f" })
        ));

        let f_domain = r#"{"a": "1", "a_u": "0", "f": "1/(x-0.5)", "g": "0",
                           "alpha0": 1, "alpha1": 1}"#;
        assert!(matches!(
            compile_config(f_domain),
            Err(ProblemError::Eval { field: "f", .. })
        ));

        let bad_bounds = r#"{"a": "1", "a_u": "0", "f": "0", "g": "0",
                             "alpha0": 0, "alpha1": 1}"#;
        assert!(matches!(
            compile_config(bad_bounds),
            Err(ProblemError::BadBounds { .. })
        ));
    }
}
