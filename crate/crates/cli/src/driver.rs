//! Experiment drivers behind the CLI subcommands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use wg_core::analysis::{self, ErrorRecord};
use wg_core::element::{ElementError, ElementOps};
use wg_core::mesh::{Mesh, MeshError};
use wg_core::problem::Problem;
use wg_core::system::{self, NewtonConfig, SolutionFile, SolveError};
use wg_core::twogrid::{self, GridPair, TwoGridError};

use crate::problems::{self, ProblemError};

/// Degrees the quadrature tables support: cell assembly integrates to 2k+4.
pub const MAX_K: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Solver(String),
    #[error("{0}")]
    Validation(String),
}

impl CliError {
    /// Process exit code: 2 usage, 3 solver failure, 4 validation failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Validation(_) => 4,
        }
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        CliError::Solver(e.to_string())
    }
}

impl From<TwoGridError> for CliError {
    fn from(e: TwoGridError) -> Self {
        CliError::Solver(e.to_string())
    }
}

impl From<ElementError> for CliError {
    fn from(e: ElementError) -> Self {
        CliError::Solver(e.to_string())
    }
}

impl From<MeshError> for CliError {
    fn from(e: MeshError) -> Self {
        CliError::Validation(e.to_string())
    }
}

/// How the user asked for a mesh.
#[derive(Debug, Clone, PartialEq)]
pub enum MeshSpec {
    Rect(usize),
    Pquad { n: usize, delta: f64, seed: u64 },
    File(PathBuf),
}

/// `rect:N`, `pquad:N:delta:seed`, or a path to a mesh JSON file.
pub fn parse_mesh_spec(text: &str) -> Result<MeshSpec, CliError> {
    if let Some(rest) = text.strip_prefix("rect:") {
        let n = rest
            .parse::<usize>()
            .map_err(|_| CliError::Usage(format!("rect:N needs an integer N, got {rest:?}")))?;
        return Ok(MeshSpec::Rect(n));
    }
    if let Some(rest) = text.strip_prefix("pquad:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 3 {
            return Err(CliError::Usage(format!(
                "pquad takes N:delta:seed, got {rest:?}"
            )));
        }
        let n = parts[0].parse::<usize>().map_err(|_| {
            CliError::Usage(format!(
                "pquad grid size must be an integer, got {:?}",
                parts[0]
            ))
        })?;
        let delta = parts[1].parse::<f64>().map_err(|_| {
            CliError::Usage(format!("pquad delta must be a number, got {:?}", parts[1]))
        })?;
        let seed = parts[2].parse::<u64>().map_err(|_| {
            CliError::Usage(format!("pquad seed must be an integer, got {:?}", parts[2]))
        })?;
        return Ok(MeshSpec::Pquad { n, delta, seed });
    }
    Ok(MeshSpec::File(PathBuf::from(text)))
}

/// Mesh plus the identification that goes into reports: a label, the grid
/// parameter N (cell count for imported meshes), and the tabulated h
/// (1/N on uniform rectangular grids, max h_K otherwise).
pub struct NamedMesh {
    pub mesh: Mesh,
    pub label: String,
    pub n: usize,
    pub h: f64,
}

pub fn build_mesh(spec: &MeshSpec) -> Result<NamedMesh, CliError> {
    match spec {
        MeshSpec::Rect(n) => {
            let mesh = Mesh::rectangular(*n)?;
            Ok(NamedMesh {
                mesh,
                label: format!("rect:{n}"),
                n: *n,
                h: 1.0 / *n as f64,
            })
        }
        MeshSpec::Pquad { n, delta, seed } => {
            let mesh = Mesh::perturbed_quad(*n, *delta, *seed)?;
            let h = mesh.h_max();
            Ok(NamedMesh {
                mesh,
                label: format!("pquad:{n}"),
                n: *n,
                h,
            })
        }
        MeshSpec::File(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("cannot read mesh file {}: {e}", path.display()))
            })?;
            let mesh = Mesh::from_json(&text)?;
            let label = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string());
            let n = mesh.cells.len();
            let h = mesh.h_max();
            Ok(NamedMesh { mesh, label, n, h })
        }
    }
}

/// Resolve `--problem`: a built-in name or a JSON config path. Every problem
/// is validated before it reaches the solver.
pub fn load_problem(arg: &str) -> Result<Problem, CliError> {
    let problem = match problems::builtin_problem(arg) {
        Ok(p) => p,
        Err(ProblemError::UnknownName(_)) => {
            if !Path::new(arg).exists() {
                return Err(CliError::Usage(format!(
                    "{arg:?} is not a built-in problem (ex1, ex2) or a readable config file"
                )));
            }
            let text = std::fs::read_to_string(arg)
                .map_err(|e| CliError::Usage(format!("cannot read {arg}: {e}")))?;
            problems::compile_config(&text).map_err(|e| CliError::Validation(e.to_string()))?
        }
        Err(other) => return Err(CliError::Validation(other.to_string())),
    };
    problems::validate_problem(&problem).map_err(|e| CliError::Validation(e.to_string()))?;
    problems::check_source(&problem).map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(problem)
}

fn check_degree(k: usize) -> Result<(), CliError> {
    if (1..=MAX_K).contains(&k) {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "--degree must lie in 1..={MAX_K} (quadrature tables stop at degree 12), got {k}"
        )))
    }
}

fn write_or_print(out: Option<&Path>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

/// Errors of a solved level against the exact solution, when known.
fn measure(
    problem: &Problem,
    named: &NamedMesh,
    u_h: &wg_core::space::WgFunction,
    iterations: usize,
    seconds: f64,
) -> Result<ErrorRecord, CliError> {
    let ops = ElementOps::build(&named.mesh, u_h.dofmap.clone())?;
    let u = problem
        .u_exact
        .clone()
        .ok_or_else(|| CliError::Validation("problem has no exact solution".into()))?;
    let grad = problem.grad_u_exact.clone().ok_or_else(|| {
        CliError::Validation("problem has no exact gradient (grad_u_exact)".into())
    })?;
    Ok(ErrorRecord {
        label: named.label.clone(),
        n: named.n,
        h: named.h,
        err_h1: analysis::energy_distance(&|x, y| u(x, y), u_h, &named.mesh, &ops),
        err_l2: analysis::l2_error(&|x, y| u(x, y), u_h, &named.mesh, &ops),
        h1_broken: analysis::h1_like_error(&|x, y| grad(x, y), u_h, &named.mesh, &ops),
        newton_iters: iterations,
        seconds,
    })
}

pub fn run_solve(
    problem_arg: &str,
    mesh_arg: &str,
    k: usize,
    out: Option<&Path>,
) -> Result<(), CliError> {
    check_degree(k)?;
    let problem = load_problem(problem_arg)?;
    let named = build_mesh(&parse_mesh_spec(mesh_arg)?)?;
    let config = NewtonConfig::default();

    let (u_h, report) = system::newton_solve(&problem, &named.mesh, k, &config)?;
    println!(
        "solved {problem_arg} on {} (k={k}): {} cells, {} free DoFs",
        named.label,
        named.mesh.cells.len(),
        u_h.dofmap.n_free()
    );
    println!(
        "newton iterations: {} (final residual {:.3e})",
        report.iterations, report.final_residual
    );
    for w in &report.warnings {
        println!("warning: {w}");
    }
    if problem.u_exact.is_some() && problem.grad_u_exact.is_some() {
        let rec = measure(
            &problem,
            &named,
            &u_h,
            report.iterations,
            report.seconds_total,
        )?;
        println!(
            "err_h1 = {}, err_l2 = {}",
            analysis::format_sci(rec.err_h1),
            analysis::format_sci(rec.err_l2)
        );
    }
    println!(
        "assembly {:.3}s, linear {:.3}s, total {:.3}s",
        report.seconds_assembly, report.seconds_linear, report.seconds_total
    );
    if let Some(path) = out {
        let file = SolutionFile::from_function(&u_h);
        let text = serde_json::to_string(&file)
            .map_err(|e| CliError::Validation(format!("serializing solution: {e}")))?;
        std::fs::write(path, text)
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    Rect,
    Pquad,
}

/// Incremental order between two refinement levels.
fn step_rate(prev: &ErrorRecord, cur: &ErrorRecord) -> f64 {
    (prev.err_h1 / cur.err_h1).ln() / (prev.h / cur.h).ln()
}

pub fn run_convergence(
    problem_arg: &str,
    k: usize,
    grids: &[usize],
    kind: GridKind,
    delta: f64,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    check_degree(k)?;
    if grids.is_empty() {
        return Err(CliError::Usage("--grids needs at least one level".into()));
    }
    let problem = load_problem(problem_arg)?;
    if problem.u_exact.is_none() || problem.grad_u_exact.is_none() {
        return Err(CliError::Validation(
            "a convergence study needs u_exact and grad_u_exact".into(),
        ));
    }
    let config = NewtonConfig::default();

    let mut csv = String::from(analysis::CSV_HEADER);
    csv.push('\n');
    let mut records: Vec<ErrorRecord> = Vec::new();
    for &n in grids {
        let spec = match kind {
            GridKind::Rect => MeshSpec::Rect(n),
            GridKind::Pquad => MeshSpec::Pquad { n, delta, seed },
        };
        let named = build_mesh(&spec)?;
        let t = Instant::now();
        match system::newton_solve(&problem, &named.mesh, k, &config) {
            Ok((u_h, report)) => {
                let rec = measure(
                    &problem,
                    &named,
                    &u_h,
                    report.iterations,
                    t.elapsed().as_secs_f64(),
                )?;
                let rate = records.last().map(|prev| step_rate(prev, &rec));
                let _ = writeln!(csv, "{}", analysis::csv_line(&rec, rate));
                println!(
                    "{}: err_h1 = {}, err_l2 = {}, {} newton iterations",
                    rec.label,
                    analysis::format_sci(rec.err_h1),
                    analysis::format_sci(rec.err_l2),
                    rec.newton_iters
                );
                records.push(rec);
            }
            Err(e) => {
                let _ = writeln!(
                    csv,
                    "{}",
                    analysis::csv_failed_line(&named.label, n, Some(named.h))
                );
                write_or_print(out, &csv)?;
                return Err(CliError::Solver(format!("level {}: {e}", named.label)));
            }
        }
    }

    if records.len() >= 2 {
        let hs: Vec<f64> = records.iter().map(|r| r.h).collect();
        let h1: Vec<f64> = records.iter().map(|r| r.err_h1).collect();
        let l2: Vec<f64> = records.iter().map(|r| r.err_l2).collect();
        let rate_h1 = analysis::fit_rate(&hs, &h1)
            .map_err(|e| CliError::Validation(format!("rate fit: {e}")))?;
        let rate_l2 = analysis::fit_rate(&hs, &l2)
            .map_err(|e| CliError::Validation(format!("rate fit: {e}")))?;
        println!("fitted rates: h1 {rate_h1:.2}, l2 {rate_l2:.2}");
    }
    write_or_print(out, &csv)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Pairing {
    Sqrt,
    Explicit(Vec<usize>),
}

/// `sqrt` or `explicit:2,4,6,8`.
pub fn parse_pairing(text: &str) -> Result<Pairing, CliError> {
    if text == "sqrt" {
        return Ok(Pairing::Sqrt);
    }
    if let Some(list) = text.strip_prefix("explicit:") {
        let sizes = list
            .split(',')
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|_| CliError::Usage(format!("bad coarse grid size {s:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        return Ok(Pairing::Explicit(sizes));
    }
    Err(CliError::Usage(format!(
        "--pairing is 'sqrt' or 'explicit:<list>', got {text:?}"
    )))
}

fn coarse_sizes(fine: &[usize], pairing: &Pairing) -> Result<Vec<usize>, CliError> {
    match pairing {
        Pairing::Sqrt => Ok(fine
            .iter()
            .map(|&n| ((n as f64).sqrt().round() as usize).max(1))
            .collect()),
        Pairing::Explicit(sizes) => {
            if sizes.len() != fine.len() {
                return Err(CliError::Usage(format!(
                    "explicit pairing lists {} coarse sizes for {} fine grids",
                    sizes.len(),
                    fine.len()
                )));
            }
            Ok(sizes.clone())
        }
    }
}

pub fn run_twogrid(
    problem_arg: &str,
    k: usize,
    fine: &[usize],
    pairing: &Pairing,
    out: Option<&Path>,
) -> Result<(), CliError> {
    check_degree(k)?;
    if fine.is_empty() {
        return Err(CliError::Usage("--fine needs at least one level".into()));
    }
    let problem = load_problem(problem_arg)?;
    if problem.u_exact.is_none() || problem.grad_u_exact.is_none() {
        return Err(CliError::Validation(
            "the comparison table needs u_exact and grad_u_exact".into(),
        ));
    }
    let coarse = coarse_sizes(fine, pairing)?;
    let config = NewtonConfig::default();

    let mut csv = String::from(analysis::CSV_HEADER);
    csv.push('\n');
    let mut wg_records: Vec<ErrorRecord> = Vec::new();
    let mut tg_records: Vec<ErrorRecord> = Vec::new();
    for (&n, &m) in fine.iter().zip(&coarse) {
        let named = build_mesh(&MeshSpec::Rect(n))?;

        let t = Instant::now();
        let direct = system::newton_solve(&problem, &named.mesh, k, &config);
        let (u_wg, report) = match direct {
            Ok(v) => v,
            Err(e) => {
                let _ = writeln!(
                    csv,
                    "{}",
                    analysis::csv_failed_line(&named.label, n, Some(named.h))
                );
                write_or_print(out, &csv)?;
                return Err(CliError::Solver(format!("level {}: {e}", named.label)));
            }
        };
        let wg_seconds = t.elapsed().as_secs_f64();
        let wg_rec = measure(&problem, &named, &u_wg, report.iterations, wg_seconds)?;
        let wg_rate = wg_records.last().map(|prev| step_rate(prev, &wg_rec));
        let _ = writeln!(csv, "{}", analysis::csv_line(&wg_rec, wg_rate));

        let tg_label = format!("{}:tg", named.label);
        let coarse_mesh = build_mesh(&MeshSpec::Rect(m))?;
        let pair = GridPair::new(coarse_mesh.mesh, named.mesh.clone())?;
        let t = Instant::now();
        let two = twogrid::two_grid_solve(&problem, &pair, k, &config);
        let (u_tg, tg_report) = match two {
            Ok(v) => v,
            Err(e) => {
                let _ = writeln!(
                    csv,
                    "{}",
                    analysis::csv_failed_line(&tg_label, n, Some(named.h))
                );
                write_or_print(out, &csv)?;
                return Err(CliError::Solver(format!("level {tg_label}: {e}")));
            }
        };
        let tg_seconds = t.elapsed().as_secs_f64();
        let mut tg_rec = measure(
            &problem,
            &named,
            &u_tg,
            tg_report.coarse.iterations,
            tg_seconds,
        )?;
        tg_rec.label = tg_label;
        let tg_rate = tg_records.last().map(|prev| step_rate(prev, &tg_rec));
        let _ = writeln!(csv, "{}", analysis::csv_line(&tg_rec, tg_rate));

        println!(
            "{}: wg err_h1 = {} ({:.2}s), two-grid err_h1 = {} ({:.2}s, coarse rect:{m})",
            named.label,
            analysis::format_sci(wg_rec.err_h1),
            wg_seconds,
            analysis::format_sci(tg_rec.err_h1),
            tg_seconds
        );
        wg_records.push(wg_rec);
        tg_records.push(tg_rec);
    }

    if wg_records.len() >= 2 {
        let hs: Vec<f64> = wg_records.iter().map(|r| r.h).collect();
        let wg: Vec<f64> = wg_records.iter().map(|r| r.err_h1).collect();
        let tg: Vec<f64> = tg_records.iter().map(|r| r.err_h1).collect();
        let rate_wg = analysis::fit_rate(&hs, &wg)
            .map_err(|e| CliError::Validation(format!("rate fit: {e}")))?;
        let rate_tg = analysis::fit_rate(&hs, &tg)
            .map_err(|e| CliError::Validation(format!("rate fit: {e}")))?;
        println!("fitted h1 rates: wg {rate_wg:.2}, two-grid {rate_tg:.2}");
    }
    if let (Some(w), Some(t)) = (wg_records.last(), tg_records.last()) {
        println!(
            "finest level {}: two-grid took {:.2}x the direct time",
            w.label,
            t.seconds / w.seconds
        );
    }
    write_or_print(out, &csv)
}
