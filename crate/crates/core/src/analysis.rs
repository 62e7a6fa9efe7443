//! Discrete norms, errors against manufactured solutions, and convergence
//! rate fitting, plus the CSV row format the experiment drivers emit.

use nalgebra::DVector;
use thiserror::Error;

use crate::element::ElementOps;
use crate::mesh::Mesh;
use crate::poly::EdgeBasis;
use crate::quad;
use crate::space::WgFunction;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("rate fitting needs at least two levels with matching lengths")]
    NotEnoughLevels,
    #[error("rate fitting needs strictly positive mesh sizes and errors")]
    NonPositiveData,
}

/// Energy norm |||v|||² = Σ_K ‖∇_w v‖²_K + h_K⁻¹‖v₀ − v_b‖²_{∂K}.
pub fn energy_norm(mesh: &Mesh, ops: &ElementOps, v: &WgFunction) -> f64 {
    let mut total = 0.0;
    for cops in &ops.cells {
        let c = v.local_coeffs(mesh, cops.cell);
        total += (&cops.energy * &c).dot(&c);
    }
    total.max(0.0).sqrt()
}

/// L² norm of the interior component v₀.
pub fn l2_norm_u0(mesh: &Mesh, ops: &ElementOps, v: &WgFunction) -> f64 {
    let mut total = 0.0;
    for cops in &ops.cells {
        let c = v.local_coeffs(mesh, cops.cell);
        let u0 = cops.u0_at_q(&c);
        for (q, &w) in cops.rule.weights.iter().enumerate() {
            total += w * u0[q] * u0[q];
        }
    }
    total.sqrt()
}

fn error_rule_degree(k: usize) -> usize {
    // Error-grade quadrature: 2k+6, clamped to the tabulated triangle rules.
    (2 * k + 6).min(quad::MAX_DEGREE)
}

/// Discrete H¹-like error ‖u − u_h‖_{1,h}: per cell
/// ‖∇u − ∇u₀‖²_K plus the stabilizer-weighted jump ‖u₀ − u_b‖²_{∂K}
/// (the exact solution cancels from the edge term, leaving the jump of u_h).
pub fn h1_like_error(
    grad_u: &dyn Fn(f64, f64) -> (f64, f64),
    u_h: &WgFunction,
    mesh: &Mesh,
    ops: &ElementOps,
) -> f64 {
    let k = ops.dofmap.k;
    let deg = error_rule_degree(k);
    let ebasis = EdgeBasis::new(k);
    let edge_dim = ops.dofmap.edge_dim;
    let mut total = 0.0;
    for cops in &ops.cells {
        let c = u_h.local_coeffs(mesh, cops.cell);
        let rule = quad::cell_quadrature(mesh, cops.cell, deg)
            .expect("error-norm quadrature degree stays within the rule table");
        let mut gx = vec![0.0; cops.n_int];
        let mut gy = vec![0.0; cops.n_int];
        for (q, p) in rule.points.iter().enumerate() {
            cops.basis.grad_into(p, &mut gx, &mut gy);
            let mut d0 = (0.0, 0.0);
            for j in 0..cops.n_int {
                d0.0 += c[j] * gx[j];
                d0.1 += c[j] * gy[j];
            }
            let du = grad_u(p.x, p.y);
            total += rule.weights[q] * ((du.0 - d0.0).powi(2) + (du.1 - d0.1).powi(2));
        }
        let mut leg = vec![0.0; edge_dim];
        for (le, &e) in mesh.cells[cops.cell].edges.iter().enumerate() {
            let erule = quad::edge_quadrature(mesh, e, deg)
                .expect("error-norm quadrature degree stays within the rule table");
            for (q, p) in erule.points.iter().enumerate() {
                let u0 = cops.eval_u0(&c, p);
                ebasis.eval_into(erule.params[q], &mut leg);
                let ub: f64 = (0..edge_dim)
                    .map(|j| c[cops.n_int + le * edge_dim + j] * leg[j])
                    .sum();
                total += erule.weights[q] / cops.h_stab * (u0 - ub).powi(2);
            }
        }
    }
    total.sqrt()
}

/// L² error ‖u − u₀‖ of the interior component.
pub fn l2_error(
    u: &dyn Fn(f64, f64) -> f64,
    u_h: &WgFunction,
    mesh: &Mesh,
    ops: &ElementOps,
) -> f64 {
    let deg = error_rule_degree(ops.dofmap.k);
    let mut total = 0.0;
    for cops in &ops.cells {
        let c = u_h.local_coeffs(mesh, cops.cell);
        let rule = quad::cell_quadrature(mesh, cops.cell, deg)
            .expect("error-norm quadrature degree stays within the rule table");
        for (q, p) in rule.points.iter().enumerate() {
            let diff = u(p.x, p.y) - cops.eval_u0(&c, p);
            total += rule.weights[q] * diff * diff;
        }
    }
    total.sqrt()
}

/// Energy distance |||Q_h u − u_h||| to the projected exact solution.
pub fn energy_distance(
    u: &dyn Fn(f64, f64) -> f64,
    u_h: &WgFunction,
    mesh: &Mesh,
    ops: &ElementOps,
) -> f64 {
    let qh = ops.project_qh(mesh, u);
    let diff = WgFunction::from_coeffs(u_h.dofmap.clone(), DVector::from(&qh.coeffs - &u_h.coeffs));
    energy_norm(mesh, ops, &diff)
}

/// Least-squares slope of log(error) against log(h) over all levels.
pub fn fit_rate(h: &[f64], err: &[f64]) -> Result<f64, AnalysisError> {
    if h.len() != err.len() || h.len() < 2 {
        return Err(AnalysisError::NotEnoughLevels);
    }
    if h.iter().chain(err).any(|&v| v.is_nan() || v <= 0.0) {
        return Err(AnalysisError::NonPositiveData);
    }
    let n = h.len() as f64;
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        num += (x - xm) * (y - ym);
        den += (x - xm) * (x - xm);
    }
    if den == 0.0 {
        return Err(AnalysisError::NonPositiveData);
    }
    Ok(num / den)
}

/// One row of a convergence table.
#[derive(Debug, Clone)]
pub struct ErrorRecord {
    /// Mesh label, e.g. "rect:16" or "rect:64:tg".
    pub label: String,
    /// Grid parameter N for generated meshes, cell count otherwise.
    pub n: usize,
    /// Reported mesh size: 1/N on uniform rectangular grids, max h_K else.
    pub h: f64,
    /// Energy-norm error |||Q_h u − u_h||| against the projected exact
    /// solution — the H¹-order quantity reported in convergence tables.
    pub err_h1: f64,
    /// ‖u − u₀‖ of the interior component.
    pub err_l2: f64,
    /// Broken-gradient form ‖u − u_h‖_{1,h} (not a CSV column, kept for
    /// diagnostics; same convergence order as err_h1 with a larger constant).
    pub h1_broken: f64,
    pub newton_iters: usize,
    pub seconds: f64,
}

pub const CSV_HEADER: &str = "mesh,n,h,err_h1,err_l2,rate_placeholder,newton_iters,seconds";

/// C-style `%.6e`: six fractional digits and an always-signed exponent of at
/// least two digits ("4.390000e-01").
pub fn format_sci(x: f64) -> String {
    let s = format!("{x:.6e}");
    let (mantissa, exp) = s.split_once('e').expect("float in scientific notation");
    let (sign, digits) = match exp.strip_prefix('-') {
        Some(d) => ('-', d),
        None => ('+', exp),
    };
    format!("{mantissa}e{sign}{digits:0>2}")
}

/// CSV row for a solved level. `rate` is the incremental rate against the
/// previous level (empty on the first row).
pub fn csv_line(r: &ErrorRecord, rate: Option<f64>) -> String {
    let rate_s = rate.map(format_sci).unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{},{}",
        r.label,
        r.n,
        format_sci(r.h),
        format_sci(r.err_h1),
        format_sci(r.err_l2),
        rate_s,
        r.newton_iters,
        format_sci(r.seconds)
    )
}

/// CSV marker row for a level whose solve failed.
pub fn csv_failed_line(label: &str, n: usize, h: Option<f64>) -> String {
    let h_s = h.map(format_sci).unwrap_or_default();
    format!("{label},{n},{h_s},,,FAILED,,")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_rate_on_exact_sequences() {
        assert!((fit_rate(&[0.25, 0.125], &[1.0, 0.5]).unwrap() - 1.0).abs() < 1e-12);
        let r = fit_rate(&[0.25, 0.125, 0.0625], &[1.0, 0.25, 0.0625]).unwrap();
        assert!((r - 2.0).abs() < 1e-12);
        assert!(fit_rate(&[0.25], &[1.0]).is_err());
        assert!(fit_rate(&[0.25, 0.125], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn fit_rate_published_first_order_column() {
        let h = [0.25, 0.125, 0.0625, 0.03125, 0.015625];
        let e = [1.63, 8.66e-1, 4.39e-1, 2.20e-1, 1.10e-1];
        let r = fit_rate(&h, &e).unwrap();
        assert!((r - 0.97).abs() < 0.01, "rate = {r}");
    }

    #[test]
    fn sci_format_matches_c_printf() {
        assert_eq!(format_sci(1.0), "1.000000e+00");
        assert_eq!(format_sci(0.0), "0.000000e+00");
        assert_eq!(format_sci(4.39e-1), "4.390000e-01");
        assert_eq!(format_sci(-2.2905e-3), "-2.290500e-03");
        assert_eq!(format_sci(1.0e100), "1.000000e+100");
        assert_eq!(format_sci(123.456), "1.234560e+02");
    }

    #[test]
    fn csv_lines_are_fixed_width_in_fields() {
        let r = ErrorRecord {
            label: "rect:16".into(),
            n: 16,
            h: 1.0 / 16.0,
            err_h1: 4.39e-1,
            err_l2: 1.48e-2,
            h1_broken: 0.1,
            newton_iters: 5,
            seconds: 0.25,
        };
        let line = csv_line(&r, None);
        assert_eq!(line.split(',').count(), CSV_HEADER.split(',').count());
        assert_eq!(
            line,
            "rect:16,16,6.250000e-02,4.390000e-01,1.480000e-02,,5,2.500000e-01"
        );
        let failed = csv_failed_line("rect:32", 32, Some(1.0 / 32.0));
        assert_eq!(failed.split(',').count(), CSV_HEADER.split(',').count());
        assert!(failed.contains("FAILED"));
    }
}
