use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::DVector;
use nonholo_cli::scenario::{default_depth, GridSpec};
use nonholo_cli::{geometry_report, run_scenario, CliError, Overrides, EXIT_PASS, EXIT_TOLERANCE};
use nonholo_core::systems::{builtin_system, SYSTEM_NAMES};

#[derive(Debug, Parser)]
#[command(name = "nonholo", about = "Nonholonomic dynamics and Hamilton–Jacobi checks")]
struct Cli {
    /// Overrides the scenario tolerance.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    /// Seed for randomized grids.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for reports and CSV.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Runs a scenario file.
    Run { scenario: PathBuf },
    /// Reports regularity, bracket-generating rank and structure coefficients over a grid.
    Geometry {
        system: String,
        /// Lower grid corner, comma separated. Defaults to -2 on every axis.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        lo: Option<Vec<f64>>,
        /// Upper grid corner. Defaults to 2 on every axis.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        hi: Option<Vec<f64>>,
        /// Lattice points per axis. Defaults to 5.
        #[arg(long, value_delimiter = ',')]
        counts: Option<Vec<usize>>,
        /// Use this many seeded random points instead of a lattice.
        #[arg(long, conflicts_with = "counts")]
        random: Option<usize>,
        /// Quasivelocity at which G^{LD} is evaluated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        y: Option<Vec<f64>>,
        #[arg(long, default_value_t = default_depth())]
        depth: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides { tolerance: cli.tolerance, seed: cli.seed, out: cli.out.clone() };
    let result = match cli.command {
        Command::Run { scenario } => run_scenario(&scenario, &overrides).map(|a| {
            print!("{}", a.report);
            a.report.passed()
        }),
        Command::Geometry { system, lo, hi, counts, random, y, depth } => {
            geometry(&system, lo, hi, counts, random, y, depth, &overrides)
        }
    };
    match result {
        Ok(true) => ExitCode::from(EXIT_PASS as u8),
        Ok(false) => ExitCode::from(EXIT_TOLERANCE as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn geometry(
    name: &str,
    lo: Option<Vec<f64>>,
    hi: Option<Vec<f64>>,
    counts: Option<Vec<usize>>,
    random: Option<usize>,
    y: Option<Vec<f64>>,
    depth: usize,
    overrides: &Overrides,
) -> Result<bool, CliError> {
    let system = builtin_system(name).ok_or_else(|| {
        CliError::Input(format!("unknown system {name:?}; known systems: {}", SYSTEM_NAMES.join(", ")))
    })?;
    let n = system.dim();
    let grid = GridSpec {
        lo: lo.unwrap_or_else(|| vec![-2.0; n]),
        hi: hi.unwrap_or_else(|| vec![2.0; n]),
        counts: if random.is_some() { None } else { Some(counts.unwrap_or_else(|| vec![5; n])) },
        random,
        seed: None,
    };
    let points = grid.points(overrides.seed)?;
    if let Some(y) = &y {
        if y.len() != system.rank() {
            return Err(CliError::Input(format!("--y needs {} entries", system.rank())));
        }
    }
    let y = y.map(|v| DVector::from_row_slice(&v));
    let report = geometry_report(&system, &points, y.as_ref(), depth);
    let text = report.to_string();
    print!("{text}");
    if let Some(dir) = &overrides.out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
        let path = dir.join(format!("geometry-{name}.txt"));
        std::fs::write(&path, text).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(report.passed())
}
