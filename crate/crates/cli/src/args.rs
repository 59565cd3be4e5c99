use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "privirec", version, about = "Federated graph-filter recommender experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build filters from the full interaction matrix and evaluate them.
    Centralized(RunArgs),
    /// Build dense filters with secure aggregation and evaluate them.
    Privirec(RunArgs),
    /// Build low-rank filters with secure aggregation, once per rank.
    PrivirecK(SweepArgs),
    /// Evaluate a previously written filter file.
    Eval(EvalArgs),
    /// Analytic communication cost, optionally reconciled against runs.
    Cost(CostArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// LightGCN-format train file.
    #[arg(long, requires = "test", conflicts_with = "synthetic")]
    pub train: Option<PathBuf>,

    /// LightGCN-format test file.
    #[arg(long, requires = "train")]
    pub test: Option<PathBuf>,

    /// Generated dataset as `users,items,density`.
    #[arg(long, value_name = "N,ITEMS,DENSITY")]
    pub synthetic: Option<String>,
}

#[derive(Debug, Args)]
pub struct ProtocolArgs {
    /// Normalization exponent.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,

    /// Power-method iterations.
    #[arg(long = "iters", default_value_t = 2)]
    pub iterations: usize,

    /// Columns kept for the low-pass filter; defaults to the rank.
    #[arg(long)]
    pub filter_rank: Option<usize>,

    #[arg(long, default_value_t = 20)]
    pub fraction_bits: u32,

    /// Mask graph degree factor `c` in `ceil(c log2 n)`.
    #[arg(long, default_value_t = 2.0)]
    pub degree_factor: f64,

    /// Re-orthonormalize between the two products of each iteration.
    #[arg(long)]
    pub two_qr: bool,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Gfcf,
    Turbocf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolyArg {
    AsWritten,
    Polynomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RecallArg {
    /// Divide hits by min(|test|, k).
    Min,
    /// Divide hits by |test|.
    Test,
}

#[derive(Debug, Args)]
pub struct ScoringArgs {
    #[arg(long, value_enum, default_value_t = MethodArg::Gfcf)]
    pub method: MethodArg,

    /// Low-pass weight for GF-CF.
    #[arg(long, default_value_t = 0.3)]
    pub gamma: f64,

    /// Element-wise exponent for Turbo-CF.
    #[arg(long, default_value_t = 1.0)]
    pub turbo_s: f64,

    /// Turbo-CF coefficients, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1.0")]
    pub turbo_alphas: Vec<f64>,

    #[arg(long, value_enum, default_value_t = PolyArg::AsWritten)]
    pub turbo_mode: PolyArg,

    /// Recall denominator.
    #[arg(long, value_enum, default_value_t = RecallArg::Min)]
    pub recall: RecallArg,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// CSV destination; stdout if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Leave the wall-time column empty so repeated runs compare equal.
    #[arg(long)]
    pub omit_timing: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    #[command(flatten)]
    pub scoring: ScoringArgs,
    #[command(flatten)]
    pub output: OutputArgs,

    /// Power-method rank.
    #[arg(long, default_value_t = 256)]
    pub rank: usize,

    /// Write the computed filters to this file.
    #[arg(long)]
    pub filters_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    #[command(flatten)]
    pub scoring: ScoringArgs,
    #[command(flatten)]
    pub output: OutputArgs,

    /// Power-method ranks, comma separated; one row each.
    #[arg(long, value_delimiter = ',', default_value = "256")]
    pub rank: Vec<usize>,

    /// Write the filters of each rank to `<prefix>.k<rank>.prvf`.
    #[arg(long, value_name = "PREFIX")]
    pub filters_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Filter file written by another command.
    #[arg(long)]
    pub filters: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub scoring: ScoringArgs,
    #[command(flatten)]
    pub output: OutputArgs,

    /// Seed of the synthetic dataset, if one is used.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    /// Clients.
    #[arg(long, default_value_t = 29858)]
    pub n: usize,
    #[arg(long, default_value_t = 40981)]
    pub items: usize,
    #[arg(long = "iters", default_value_t = 3)]
    pub iterations: usize,
    #[arg(long, default_value_t = 256)]
    pub k1: usize,
    #[arg(long, default_value_t = 2000)]
    pub k2: usize,
    #[arg(long, default_value_t = 64)]
    pub k3: usize,
    #[arg(long, default_value_t = 1000)]
    pub epochs: usize,

    /// Also run both protocols on this dataset and reconcile the estimate
    /// with the measured traffic. `--n` and `--items` are then taken from
    /// the data.
    #[command(flatten)]
    pub data: DataArgs,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// CSV destination; stdout if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
