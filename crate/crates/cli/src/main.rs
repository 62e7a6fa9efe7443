use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use wg_cli::driver::{self, GridKind};

/// Weak Galerkin solver for −∇·(a(u)∇u) = f on the unit square.
#[derive(Parser)]
#[command(name = "wg", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum GridTypeArg {
    Rect,
    Pquad,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem on one mesh and report errors.
    Solve {
        /// Built-in name (ex1, ex2) or path to a problem config JSON.
        #[arg(long)]
        problem: String,
        /// rect:N, pquad:N:delta:seed, or a mesh JSON file.
        #[arg(long)]
        mesh: String,
        /// Polynomial degree k of the weak functions.
        #[arg(long)]
        degree: usize,
        /// Write the solved coefficients to this JSON file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve on a refinement sequence and emit an error/rate table.
    Convergence {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        degree: usize,
        /// Comma-separated grid sizes, e.g. 4,8,16,32,64.
        #[arg(long, value_delimiter = ',', required = true)]
        grids: Vec<usize>,
        #[arg(long, value_enum, default_value = "rect")]
        grid_type: GridTypeArg,
        /// Vertex perturbation fraction for pquad grids.
        #[arg(long, default_value_t = 0.2)]
        delta: f64,
        /// Seed for pquad grids.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// CSV output path (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the direct solver against the two-grid method.
    Twogrid {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        degree: usize,
        /// Comma-separated fine grid sizes, e.g. 4,16,36,64,100.
        #[arg(long, value_delimiter = ',', required = true)]
        fine: Vec<usize>,
        /// Coarse grid rule: sqrt (default) or explicit:<list>.
        #[arg(long, default_value = "sqrt")]
        pairing: String,
        /// CSV output path (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), driver::CliError> {
    match cli.command {
        Command::Solve {
            problem,
            mesh,
            degree,
            out,
        } => driver::run_solve(&problem, &mesh, degree, out.as_deref()),
        Command::Convergence {
            problem,
            degree,
            grids,
            grid_type,
            delta,
            seed,
            out,
        } => driver::run_convergence(
            &problem,
            degree,
            &grids,
            match grid_type {
                GridTypeArg::Rect => GridKind::Rect,
                GridTypeArg::Pquad => GridKind::Pquad,
            },
            delta,
            seed,
            out.as_deref(),
        ),
        Command::Twogrid {
            problem,
            degree,
            fine,
            pairing,
            out,
        } => {
            let pairing = driver::parse_pairing(&pairing)?;
            driver::run_twogrid(&problem, degree, &fine, &pairing, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
