//! Command-line pipeline: synthesize datasets, run the annealing detection,
//! cluster the saved patterns into proposed sources and evaluate them
//! against a reference table.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hug::HugError;

#[derive(Parser)]
#[command(
    name = "hug",
    version,
    about = "Detects the number and composition of mixing end-members in \
             multidimensional hydrochemical data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic mixing dataset plus its ground-truth sources
    Synth(SynthArgs),
    /// Run the annealing detection pipeline on a dataset
    Detect(Box<DetectArgs>),
    /// Cluster the saved source patterns of a run into proposed sources
    Cluster(ClusterArgs),
    /// Compare proposed sources against a reference source table
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// TOML config with an [input.synthetic] table
    #[arg(long)]
    config: PathBuf,
    /// Output directory
    #[arg(long, default_value = "synth_out")]
    out: PathBuf,
    /// Override the generator seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct DetectArgs {
    /// TOML run config; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input CSV, overriding the config input
    #[arg(long)]
    data: Option<PathBuf>,
    /// Schedule preset: paper, paper-hot or desk (replaces [schedule])
    #[arg(long)]
    preset: Option<String>,
    /// Chain seed
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory
    #[arg(long, default_value = "hug_run")]
    out: PathBuf,
    /// Number of independent chains (seed, seed+1, ...), each in its own
    /// chain_<i> subdirectory
    #[arg(long, default_value_t = 1)]
    chains: usize,

    // Parameter overrides, named as in the run config / parameter table.
    /// Interaction radius r
    #[arg(long)]
    r: Option<f64>,
    /// Annealing iterations N
    #[arg(long)]
    n: Option<u64>,
    /// Gibbs applications per iteration G (default: one per plane)
    #[arg(long)]
    g: Option<usize>,
    /// MH steps per Gibbs application M
    #[arg(long)]
    m: Option<usize>,
    /// Initial temperature T1
    #[arg(long)]
    t1: Option<f64>,
    /// Cooling coefficient c
    #[arg(long)]
    c: Option<f64>,
    /// Temperature floor
    #[arg(long)]
    t_min: Option<f64>,
    /// Birth probability p_b
    #[arg(long)]
    p_b: Option<f64>,
    /// Death probability p_d
    #[arg(long)]
    p_d: Option<f64>,
    /// Change probability p_c
    #[arg(long)]
    p_c: Option<f64>,
    /// Change-ball radius r_c
    #[arg(long)]
    r_c: Option<f64>,
    /// Per-dimension normalization thresholds (comma separated)
    #[arg(long, value_delimiter = ',')]
    delta: Option<Vec<f64>>,
    /// Trace save interval
    #[arg(long)]
    save_every: Option<u64>,
    /// Saved records used for inference
    #[arg(long)]
    keep_last: Option<usize>,
    /// Level-set grid cell length
    #[arg(long)]
    cell_length: Option<f64>,
}

#[derive(Args)]
struct ClusterArgs {
    /// Run directory produced by `detect`
    #[arg(long)]
    run: PathBuf,
    /// Cluster count for the global k-means over all kept sources
    #[arg(long)]
    k_global: usize,
    /// Per-plane cluster counts for the sequential k-means (one value
    /// broadcasts to every plane); omitting skips the sequential step
    #[arg(long, value_delimiter = ',')]
    k_per_plane: Option<Vec<usize>>,
    /// Clustering seed (defaults to the run seed)
    #[arg(long)]
    seed: Option<u64>,
    /// Visit planes in fixed lexicographic order instead of a seeded
    /// random order
    #[arg(long)]
    fixed_order: bool,
    /// Candidate cluster counts for the mass report, e.g. 5-9
    #[arg(long)]
    mass_range: Option<String>,
    /// Number of top clusters in the mass report (defaults to k_global)
    #[arg(long)]
    mass_top: Option<usize>,
    /// Contact-probability threshold reported in the summary
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Run directory holding proposed_sources.csv
    #[arg(long)]
    run: PathBuf,
    /// Reference source table (CSV, same columns as the dataset)
    #[arg(long)]
    truth: PathBuf,
    /// Source table to evaluate instead of proposed_sources.csv
    #[arg(long)]
    sources: Option<PathBuf>,
    /// Matching strategy: optimal or greedy
    #[arg(long, default_value = "optimal")]
    matching: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => commands::synth(args),
        Command::Detect(args) => commands::detect(*args),
        Command::Cluster(args) => commands::cluster(args),
        Command::Evaluate(args) => commands::evaluate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<HugError>() {
        Some(HugError::Config(_)) => 2,
        Some(HugError::Data(_)) | Some(HugError::Io(_)) => 3,
        Some(HugError::Domain(_)) => 4,
        None => 1,
    }
}
