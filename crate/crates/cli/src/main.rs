//! `nlsv`: soliton transmission experiments, scattering data and self-checks.

mod commands;
mod manifest;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::Failure;

#[derive(Parser)]
#[command(name = "nlsv", version, about = "Soliton transmission through external potentials")]
struct Cli {
    /// Worker threads for parallel runs (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve the boosted soliton for every velocity in a config.
    Simulate {
        /// Experiment config (JSON).
        config: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Scattering coefficients, bound states and resonance test.
    Spectral {
        #[command(flatten)]
        potential: PotentialArgs,
        #[command(flatten)]
        lambdas: LambdaArgs,
        #[command(flatten)]
        grid: SpectralGridArgs,
        #[command(flatten)]
        out: OutArg,
    },
    /// Velocity scaling study with floor gates and slope fit.
    Study {
        /// Experiment config (JSON).
        config: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Run the built-in invariant suite.
    Check {
        /// Deliberately break one monitor to confirm the suite can fail.
        #[arg(long, value_enum)]
        inject_fault: Option<FaultArg>,
    },
    /// Admissibility verdict for one potential.
    PotentialReport {
        #[command(flatten)]
        potential: PotentialArgs,
        #[command(flatten)]
        grid: SpectralGridArgs,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Args, Clone)]
pub struct OutArg {
    /// Output directory; overrides the config's `out_dir`.
    #[arg(long, env = "NLSV_OUT_DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum KindArg {
    Algebraic,
    Gaussian,
    PoschlTeller,
    #[value(alias = "sech2-scaled")]
    Sech2,
    Zero,
}

#[derive(Args, Clone)]
pub struct PotentialArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Amplitude (algebraic, gaussian).
    #[arg(long, allow_negative_numbers = true)]
    pub q: Option<f64>,
    /// Decay exponent (algebraic).
    #[arg(long)]
    pub s: Option<f64>,
    /// Width (gaussian).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Well depth (poschl-teller, sech2).
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub center: f64,
}

#[derive(Args, Clone)]
pub struct LambdaArgs {
    #[arg(long, default_value_t = 0.5)]
    pub lambda_min: f64,
    #[arg(long, default_value_t = 20.0)]
    pub lambda_max: f64,
    /// Log-spaced sample count.
    #[arg(long, default_value_t = 50)]
    pub lambda_count: usize,
}

#[derive(Args, Clone)]
pub struct SpectralGridArgs {
    /// Half width of the symmetric spectral grid.
    #[arg(long, default_value_t = 64.0)]
    pub half_width: f64,
    /// Grid points (power of two).
    #[arg(long, default_value_t = 1 << 17)]
    pub points: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FaultArg {
    SquaredPotentialEnergy,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot configure worker pool: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Simulate { config, out } => commands::simulate(&config, out.out),
        Command::Spectral { potential, lambdas, grid, out } => commands::spectral(&potential, &lambdas, &grid, out.out),
        Command::Study { config, out } => commands::study(&config, out.out),
        Command::Check { inject_fault } => commands::check(inject_fault),
        Command::PotentialReport { potential, grid, out } => commands::potential_report(&potential, &grid, out.out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, message }) => {
            if !message.is_empty() {
                eprintln!("error: {message}");
            }
            ExitCode::from(code as u8)
        }
    }
}
