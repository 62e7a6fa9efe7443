//! Weak Galerkin (WG) finite elements on polygonal meshes for quasi-linear
//! elliptic problems of the form −∇·(a(u)∇u) = f on Ω ⊂ ℝ², u = g on ∂Ω.
//!
//! The discrete unknown is a *weak function* {v₀, v_b}: a degree-k polynomial
//! per cell plus a degree-k polynomial per edge, glued only through the weak
//! gradient and a penalty term. The crate provides:
//!
//! - [`mesh`]: polytopal mesh generation, import, topology and geometry;
//! - [`quad`] / [`poly`]: quadrature rules and scaled polynomial bases;
//! - [`space`] / [`element`]: DoF layout, L² projections, weak gradients,
//!   stabilizer, and the element-local bilinear forms;
//! - [`system`]: Dirichlet data, global assembly, sparse solves, Newton;
//! - [`twogrid`]: coarse-solve → frozen-coefficient fine solve acceleration;
//! - [`analysis`]: discrete norms, errors against exact solutions, rate fits;
//! - [`problem`]: runtime description of a problem instance.

pub mod analysis;
pub mod element;
pub mod mesh;
pub mod poly;
pub mod problem;
pub mod quad;
pub mod rng;
pub mod space;
pub mod system;
pub mod twogrid;

pub use element::ElementOps;
pub use mesh::{Mesh, MeshError};
pub use problem::Problem;
pub use space::{DofMap, WgFunction};
pub use system::{NewtonConfig, SolveError, SolveReport};
