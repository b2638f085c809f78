//! `hsmooth` command line tool.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Exit status when a run finished but did not converge.
const EXIT_NOT_CONVERGED: u8 = 2;
/// Exit status for invalid input or any other error.
const EXIT_ERROR: u8 = 1;

#[derive(Parser, Debug)]
#[command(
    name = "hsmooth",
    version,
    about = "Smooth-trend plus step change-point detection for time series"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "HS_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Detect level shifts in one cycle and write a report.
    Analyze(AnalyzeArgs),
    /// Fit the full penalty grid and emit both selection surfaces.
    Select(SelectArgs),
    /// Split a multi-cycle stream into cycles.
    Separate(SeparateArgs),
    /// Monte Carlo detection-probability surfaces on synthetic cycles.
    Simulate(SimulateArgs),
    /// Wall-clock comparison of the hybrid and Bayesian analyses.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
enum MethodArg {
    Elbow,
    Aicc,
    Bayes,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    Forward,
    Centered,
}

impl From<VariantArg> for hsmooth::BasisVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Forward => hsmooth::BasisVariant::Forward,
            VariantArg::Centered => hsmooth::BasisVariant::Centered,
        }
    }
}

/// Options shared by every command that fits the hybrid model.
#[derive(Args, Debug, Clone, Default)]
struct HybridFlags {
    /// Points per axis of the default (λ, ω) grids.
    #[arg(long)]
    grid_points: Option<usize>,
    /// FISTA stopping tolerance on the largest coefficient change.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

/// Options shared by every command that runs the sampler.
#[derive(Args, Debug, Clone, Default)]
struct ChainFlags {
    #[arg(long)]
    chains: Option<usize>,
    /// Sweeps per chain, burn-in included.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Central interval mass for flagging.
    #[arg(long)]
    level: Option<f64>,
    /// Sample the non-orthogonalized model.
    #[arg(long)]
    plain: bool,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// CSV with `time,value` rows or a single value column.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Minimum |γ| (or |posterior mean|) for a flag.
    #[arg(long, allow_negative_numbers = true)]
    threshold: Option<f64>,
    /// Step basis layout.
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// JSON file with defaults for any of the options.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[command(flatten)]
    hybrid: HybridFlags,
    #[command(flatten)]
    chain: ChainFlags,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[command(flatten)]
    hybrid: HybridFlags,
}

#[derive(Args, Debug)]
struct SeparateArgs {
    /// CSV with `time,value[,switch]` rows.
    #[arg(long)]
    input: PathBuf,
    /// Use the third column (non-zero = running) instead of the filters.
    #[arg(long)]
    switch_column: bool,
    /// Trim start-up and backwash transients from each cycle.
    #[arg(long)]
    trim: bool,
    #[arg(long)]
    trim_fraction: Option<f64>,
    #[arg(long)]
    min_length: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Methods to evaluate on common datasets; repeatable.
    #[arg(long, value_enum)]
    method: Vec<MethodArg>,
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    sigmas: Option<Vec<f64>>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    disturbance_index: Option<usize>,
    /// Flagging threshold (0 keeps the bare nonzero / interval rule).
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[command(flatten)]
    hybrid: HybridFlags,
    #[command(flatten)]
    chain: ChainFlags,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Cycle to time; a synthetic reference cycle when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write `bench.json` here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    hybrid: HybridFlags,
    #[command(flatten)]
    chain: ChainFlags,
}

/// How a command finished when it did not error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Ok,
    NotConverged,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors share the input-error status; exit 2 is reserved
            return if e.use_stderr() {
                ExitCode::from(EXIT_ERROR)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(EXIT_ERROR);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size thread pool: {e}");
            return ExitCode::from(EXIT_ERROR);
        }
    }
    let result = match cli.command {
        Command::Analyze(a) => commands::analyze(a),
        Command::Select(a) => commands::select(a),
        Command::Separate(a) => commands::separate(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Bench(a) => commands::bench(a),
    };
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => ExitCode::from(EXIT_NOT_CONVERGED),
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<hsmooth::Error>() {
                Some(hsmooth::Error::AllChainsFailed(_)) => ExitCode::from(EXIT_NOT_CONVERGED),
                _ => ExitCode::from(EXIT_ERROR),
            }
        }
    }
}
