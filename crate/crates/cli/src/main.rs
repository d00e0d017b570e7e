//! `ispo`: command-line front end for the integrated size and price
//! optimization library.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ispo_core::Error;

#[derive(Debug, Parser)]
#[command(name = "ispo", version, about = "Integrated size and price optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check an instance file against every invariant.
    Validate { file: PathBuf },
    /// Write a synthetic instance as JSON.
    Generate {
        /// Generator configuration (JSON); defaults to the desk preset.
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Optimize an instance.
    Solve {
        #[command(subcommand)]
        method: SolveMethod,
    },
    /// Print the Gamma bound table, or one entry of it.
    Bound {
        file: PathBuf,
        #[arg(long, requires = "trajectory")]
        scenario: Option<usize>,
        /// Trajectory id, as listed in the table.
        #[arg(long, requires = "scenario")]
        trajectory: Option<usize>,
    },
    /// Write the deterministic-equivalent MILP in LP format.
    ExportLp {
        file: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Emit the ordering form of the no-mark-up constraints.
        #[arg(long)]
        tight: bool,
    },
    /// Simulate stochastic sales.
    Simulate {
        #[command(subcommand)]
        policy: SimulatePolicy,
    },
    /// Run a seeded paired field study.
    Fieldstudy {
        /// Study specification (JSON); `{}` selects all defaults.
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Report CSV path; stdout when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Statistical tests.
    Stats {
        #[command(subcommand)]
        test: StatsTest,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    Desk,
    Tiny,
}

#[derive(Debug, Subcommand)]
enum SolveMethod {
    /// Branch-and-bound over trajectory maps.
    Exact {
        file: PathBuf,
        /// Seconds; on expiry the incumbent and its gap are reported.
        #[arg(long)]
        time_limit: Option<f64>,
        /// Search log, one node per line.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Assignment CSV of the solution.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Alternate price and size steps until a fixed point.
    Pingpong {
        file: PathBuf,
        #[arg(long, default_value_t = 10)]
        max_iters: usize,
        /// Iteration trace CSV.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Size stage for a fixed trajectory map.
    Sop {
        file: PathBuf,
        /// One trajectory per scenario and line, e.g. `p0,p0,p1,p2`;
        /// defaults to the best-bound map.
        #[arg(long)]
        map: Option<PathBuf>,
        /// Use score-fix-adjust instead of subset enumeration.
        #[arg(long)]
        heuristic: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Price stage for a fixed assignment.
    Pop {
        file: PathBuf,
        #[arg(long)]
        assignment: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum SimulatePolicy {
    /// Receding-horizon pricing on Poisson sales.
    RhPop {
        file: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Supply to sell; defaults to the ping-pong solution.
        #[arg(long)]
        assignment: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        smoothing: f64,
        /// Per-period CSV; stdout when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum StatsTest {
    /// Exact one-sided signed-rank test on a `difference` column.
    Wilcoxon { file: PathBuf },
}

/// Process exit code for a failed command.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Validation(_)
        | Error::Json(_)
        | Error::Csv(_)
        | Error::Dimension(_)
        | Error::Trajectory(_)
        | Error::PeriodOutOfRange { .. }
        | Error::OddBranchCount(_)
        | Error::Stats(_) => 2,
        Error::Infeasible(_) => 3,
        Error::WorkLimit(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
