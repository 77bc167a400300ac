//! `gergm-lab`: command-line front end for the gergm laboratory.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "gergm-lab", version, about = "Weighted exponential random graph model laboratory")]
struct Cli {
    /// Worker threads; GERGM_LAB_JOBS takes precedence.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Directory for output files and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Log-partition function by closed form, variational solve or Monte Carlo.
    Partition(PartitionArgs),
    /// Run a Markov chain and write its trace.
    Sample(SampleArgs),
    /// Solve the variational problem over a parameter grid.
    Scan(ScanArgs),
    /// Estimate coefficients from an observed graph.
    Fit(FitArgs),
    /// Homomorphism density of a motif in a graph.
    Homdensity(HomArgs),
    /// Cut distance between two graphs.
    Cutdist(CutArgs),
    /// Run the acceptance suite.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseKind {
    Gaussian,
    Quartic,
    Bernoulli,
    Poisson,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    EdgeTwoStar,
    EdgeTriangle,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConventionArg {
    AllMaps,
    DistinctIndices,
}

/// Model given either as a JSON config or by flags.
#[derive(Args, Serialize)]
pub struct ModelArgs {
    /// Model config (JSON); overrides the model flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub base: BaseKind,
    /// Bernoulli success probability.
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    /// Poisson rate.
    #[arg(long, default_value_t = 1.0)]
    pub rate: f64,
    #[arg(long, value_enum, default_value = "edge-two-star")]
    pub model: ModelKind,
    #[arg(long, value_enum, default_value = "all-maps")]
    pub convention: ConventionArg,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub beta2: f64,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMethod {
    ExactGaussian,
    Variational,
    Mc,
}

#[derive(Args, Serialize)]
pub struct PartitionArgs {
    #[arg(long, value_enum)]
    pub method: PartitionMethod,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 1_000_000)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelArg {
    Auto,
    ExactGibbs,
    Mh,
}

#[derive(Args, Serialize)]
pub struct SampleArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub sweeps: usize,
    #[arg(long, default_value_t = 100)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    #[arg(long, value_enum, default_value = "auto")]
    pub kernel: KernelArg,
    #[arg(long, default_value_t = 1.0)]
    pub proposal_sd: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args, Serialize)]
pub struct ScanArgs {
    /// Axis as NAME=START:STOP:STEP with NAME in beta1, beta2, ...; repeatable.
    #[arg(long, required = true)]
    pub grid: Vec<String>,
    /// Bisect every flagged jump down to a boundary point.
    #[arg(long)]
    pub refine: bool,
    /// Jump threshold as a multiple of the neighbouring |Δu*|.
    #[arg(long, default_value_t = 10.0)]
    pub jump_ratio: f64,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    ExactGaussian,
    Mcmle,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitArg {
    Pinned,
    MatchTwoStar,
}

#[derive(Args, Serialize)]
pub struct FitArgs {
    /// Observed graph (JSON or CSV edge list).
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, value_enum, default_value = "exact-gaussian")]
    pub method: FitMethod,
    /// Comma-separated start value; moment matching when absent.
    #[arg(long, allow_negative_numbers = true)]
    pub init: Option<String>,
    #[arg(long, value_enum, default_value = "match-two-star")]
    pub init_mode: InitArg,
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    #[arg(long, default_value_t = 20)]
    pub iters: usize,
    #[arg(long, default_value_t = 4)]
    pub chains: usize,
    #[arg(long, default_value_t = 0.1)]
    pub ess_floor: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args, Serialize)]
pub struct HomArgs {
    /// edge, two_star, triangle, j_star:J, or a JSON motif object.
    #[arg(long)]
    pub motif: String,
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, value_enum, default_value = "all-maps")]
    pub convention: ConventionArg,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    D,
    Delta,
    Both,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    Exact,
    Heuristic,
    Auto,
}

#[derive(Args, Serialize)]
pub struct CutArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    pub metric: Metric,
    #[arg(long, value_enum, default_value = "auto")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 200)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0x5eed)]
    pub seed: u64,
}

#[derive(Args, Serialize)]
pub struct ValidateArgs {
    /// all, gaussian, variational, graphkernel or base.
    #[arg(long, default_value = "all")]
    pub suite: String,
    /// Comma-separated criterion ids; overrides the suite.
    #[arg(long)]
    pub criteria: Option<String>,
}

fn configure_pool(flag: Option<usize>) -> Result<(), commands::CliError> {
    let env = std::env::var("GERGM_LAB_JOBS").ok();
    let jobs = match env {
        Some(v) => Some(
            v.trim()
                .parse::<usize>()
                .map_err(|_| commands::CliError::Usage(format!("GERGM_LAB_JOBS must be a positive integer, got '{v}'")))?,
        ),
        None => flag,
    };
    if let Some(j) = jobs {
        if j == 0 {
            return Err(commands::CliError::Usage("jobs must be at least 1".into()));
        }
        // a second initialisation only happens in tests; ignore it
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_pool(cli.jobs).and_then(|_| commands::run(&cli.command, &cli.out_dir));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
