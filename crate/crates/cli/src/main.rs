//! `corrgraph` command-line tool.
//!
//! Exit codes: 0 success, 1 bad flags or configuration, 2 malformed CSV,
//! 3 degenerate (constant) column, 4 correlation model not positive
//! definite, 5 covariance not symmetric or not positive semi-definite.

mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::io::{Failure, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "corrgraph", version, about = "Multiple testing of pairwise correlations")]
struct Cli {
    /// Worker threads (defaults to CORRGRAPH_THREADS, then to all cores).
    #[arg(long, global = true, env = "CORRGRAPH_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Test every pair of columns of a data file and write the edge table.
    Test(TestArgs),
    /// Run a simulation study described by a TOML configuration.
    Simulate(SimulateArgs),
    /// Draw a block-model graph and write its correlation matrix I + rho A.
    Model(ModelArgs),
    /// Draw Gaussian observations from a correlation matrix.
    Sample(SampleArgs),
    /// Monte Carlo quantile of the maximum of |N(0, sigma)|.
    Quantile(QuantileArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StatArg {
    Empirical,
    Student,
    Fisher,
    Secondorder,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Bonferroni,
    Sidak,
    Bootrw,
    Maxt,
    Bh,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GraphFormat {
    Edgelist,
    Dot,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OmegaArg {
    Gaussian,
    FourthMoment,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    /// CSV with a header of variable names and one observation per row.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    stat: StatArg,
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long)]
    step_down: bool,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Monte Carlo draws (maxt, default 1000) or resamples (bootrw, default 100).
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Edge table output.
    #[arg(long)]
    output: PathBuf,
    /// Also write the detected graph in this format.
    #[arg(long, value_enum)]
    graph_format: Option<GraphFormat>,
    /// Graph file path (defaults to the output path with a .edgelist or .dot extension).
    #[arg(long, requires = "graph_format")]
    graph: Option<PathBuf>,
    /// Covariance formula for the maxt plug-in.
    #[arg(long, value_enum, default_value = "gaussian")]
    omega: OmegaArg,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured replicate count.
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    p: usize,
    #[arg(long)]
    p_intra: f64,
    #[arg(long)]
    p_inter: f64,
    #[arg(long, allow_hyphen_values = true)]
    rho: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving adjacency.csv and correlation.csv.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Header-less correlation matrix CSV.
    #[arg(long)]
    correlation: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
pub struct QuantileArgs {
    /// Header-less covariance matrix CSV.
    #[arg(long)]
    sigma: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 10_000)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Test(args) => commands::test(args),
        Command::Simulate(args) => commands::simulate(args),
        Command::Model(args) => commands::model(args),
        Command::Sample(args) => commands::sample(args),
        Command::Quantile(args) => commands::quantile(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot start the thread pool: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
