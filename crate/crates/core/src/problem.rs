//! Runtime description of a quasi-linear diffusion problem
//! −∇·(a(x, u)∇u) = f on the unit square, u = g on the boundary.

use std::sync::Arc;

pub type ScalarFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// Coefficient of (x, y, u); the classic examples depend on u alone.
pub type CoeffFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(f64, f64) -> (f64, f64) + Send + Sync>;

#[derive(Clone)]
pub struct Problem {
    /// Diffusion coefficient a(x, y, u).
    pub a: CoeffFn,
    /// Partial derivative ∂a/∂u, used by the Newton linearization.
    pub a_u: CoeffFn,
    /// Source term f(x, y).
    pub f: ScalarFn,
    /// Dirichlet boundary data g(x, y).
    pub g: ScalarFn,
    /// Exact solution, when known (manufactured problems).
    pub u_exact: Option<ScalarFn>,
    /// Gradient of the exact solution, when known.
    pub grad_u_exact: Option<GradFn>,
    /// Lower bound of a on the solution range.
    pub alpha0: f64,
    /// Upper bound of a on the solution range.
    pub alpha1: f64,
    /// Bound on |∂a/∂u| over the solution range.
    pub m_a: f64,
    /// Range of u values over which the bounds above hold.
    pub u_range: (f64, f64),
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("alpha0", &self.alpha0)
            .field("alpha1", &self.alpha1)
            .field("m_a", &self.m_a)
            .field("u_range", &self.u_range)
            .field("has_exact", &self.u_exact.is_some())
            .finish()
    }
}

impl Problem {
    /// A linear Poisson problem (a ≡ 1) with the given data; handy for tests.
    pub fn poisson(f: ScalarFn, g: ScalarFn) -> Self {
        Problem {
            a: Arc::new(|_, _, _| 1.0),
            a_u: Arc::new(|_, _, _| 0.0),
            f,
            g,
            u_exact: None,
            grad_u_exact: None,
            alpha0: 1.0,
            alpha1: 1.0,
            m_a: 0.0,
            u_range: (-1.0, 1.0),
        }
    }
}
