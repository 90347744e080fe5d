//! `helm1d`: solve layered 1D Helmholtz problems, report stability bounds,
//! generate constructive configurations, verify solver paths, and sweep in frequency.
//!
//! Exit codes: 0 success, 1 verification mismatch, 2 invalid input,
//! 3 effectively resonant instance (outputs are still written and flagged).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{CliError, GenerateArgs, SweepArgs};

#[derive(Parser, Debug)]
#[command(name = "helm1d", version, about = "Exact solver and stability bounds for 1D Helmholtz problems in layered media")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct GeneratorFlags {
    /// Configuration family: well-behaved, critical or random.
    #[arg(long)]
    kind: String,
    /// Relative jump modulus q.
    #[arg(long, default_value_t = 0.5)]
    q: f64,
    /// Half the number of jumps of the critical construction (must be even).
    #[arg(long, conflicts_with = "n")]
    k: Option<usize>,
    /// Number of jumps (well-behaved: odd; random: fixed count).
    #[arg(long)]
    n: Option<usize>,
    /// Seed of the random generator.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve an instance and write u (and optionally u') on equispaced samples as CSV.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// CSV output path; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 2048)]
        samples: usize,
        /// Also write u'.
        #[arg(long)]
        derivative: bool,
    },
    /// Print the full stability report as JSON.
    Bounds {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a generated configuration as JSON.
    Generate {
        #[command(flatten)]
        gen: GeneratorFlags,
        #[arg(long)]
        omega: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-check the solver paths, determinant identities and residuals.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// Number of additional randomly perturbed instances.
        #[arg(long, default_value_t = 0)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Tabulate norms and bounds over a frequency range as CSV.
    Sweep {
        #[command(flatten)]
        gen: GeneratorFlags,
        /// `start:step:stop`.
        #[arg(long = "omega-range")]
        omega_range: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    let tol = helm1d::Tolerances::from_env().map_err(CliError::Invalid)?;
    match cli.command {
        Command::Solve { config, out, samples, derivative } => commands::solve(&config, out.as_deref(), samples, derivative, &tol),
        Command::Bounds { config, out } => commands::bounds(&config, out.as_deref(), &tol),
        Command::Generate { gen, omega, out } => commands::generate(
            &GenerateArgs { kind: gen.kind, omega, q: gen.q, k: gen.k, n: gen.n, seed: gen.seed },
            out.as_deref(),
        ),
        Command::Verify { config, trials, seed } => commands::verify(&config, trials, seed, &tol),
        Command::Sweep { gen, omega_range, out } => commands::sweep(
            &SweepArgs { kind: gen.kind, range: omega_range, q: gen.q, k: gen.k, n: gen.n, seed: gen.seed },
            out.as_deref(),
            &tol,
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
