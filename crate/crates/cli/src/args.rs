use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use vipr::trainer::{Estimator, DEFAULT_SWEEP_RESTARTS};
use vipr::validation::Level;

pub const OUT_DIR_ENV: &str = "VIPR_OUT_DIR";
pub const THREADS_ENV: &str = "VIPR_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "vipr",
    version,
    about = "Variational inference of ultrametric phylogenies from a nucleotide alignment"
)]
pub struct Cli {
    /// JSON file of per-subcommand flag values, e.g. {"infer": {"batch-size": 20}}.
    /// Flags given on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads [default: all cores]
    #[arg(long, global = true, env = THREADS_ENV, value_name = "N")]
    pub threads: Option<usize>,

    /// Log verbosity: error, warn, info, debug or trace
    #[arg(long, global = true, default_value = "warn", value_name = "LEVEL")]
    pub log_level: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the variational posterior to an alignment
    Infer(InferArgs),
    /// Importance-sampling estimate of the marginal log-likelihood
    Mll(MllArgs),
    /// Draw trees from a fitted posterior as Newick on stdout
    Sample(SampleArgs),
    /// Simulate a coalescent tree and a Jukes-Cantor alignment on it
    Simulate(SimulateArgs),
    /// Run the numerical validation suite
    Check(CheckArgs),
    /// Time the density and estimator paths over a range of taxon counts
    BenchScaling(BenchArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Infer(_) => "infer",
            Command::Mll(_) => "mll",
            Command::Sample(_) => "sample",
            Command::Simulate(_) => "simulate",
            Command::Check(_) => "check",
            Command::BenchScaling(_) => "bench-scaling",
        }
    }
}

/// Where the initial variational parameters come from.
#[derive(Debug, Clone, PartialEq)]
pub enum InitSource {
    Distances,
    Trees(PathBuf),
}

impl FromStr for InitSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "distances" {
            Ok(InitSource::Distances)
        } else if let Some(path) = s.strip_prefix("trees=") {
            if path.is_empty() {
                Err("`trees=` needs a file path".into())
            } else {
                Ok(InitSource::Trees(PathBuf::from(path)))
            }
        } else {
            Err(format!("expected `distances` or `trees=<file>`, got `{s}`"))
        }
    }
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Aligned sequences in FASTA format
    pub fasta: PathBuf,

    /// Gradient estimator: loor, reparam or vimco
    #[arg(long, default_value = "loor")]
    pub estimator: Estimator,

    /// Trees per gradient estimate
    #[arg(long, default_value_t = 10, value_name = "K")]
    pub batch_size: usize,

    /// Adam step size (ignored with --sweep)
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,

    /// Maximum number of iterations
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,

    /// Stop after this many seconds of wallclock (ignored with --deterministic)
    #[arg(long, value_name = "SECONDS")]
    pub time_budget: Option<f64>,

    /// Iterations between marginal-likelihood evaluations and checkpoints
    #[arg(long, default_value_t = 10)]
    pub eval_every: usize,

    /// Importance samples per marginal-likelihood evaluation
    #[arg(long, default_value_t = 50)]
    pub eval_samples: usize,

    /// Master random seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Write zero wallclock times and disable the time budget, so outputs
    /// are byte-identical across runs with the same seed
    #[arg(long)]
    pub deterministic: bool,

    /// Effective population size of the coalescent prior
    #[arg(long, default_value_t = vipr::prior::DEFAULT_POP_SIZE)]
    pub pop_size: f64,

    /// Initial parameters: `distances` or `trees=<file>` with one Newick tree per line
    #[arg(long, default_value = "distances", value_name = "SOURCE")]
    pub init: InitSource,

    /// Train every (rate, restart) cell and keep the best by mean of the last ten estimates
    #[arg(long)]
    pub sweep: bool,

    /// Learning rates tried by --sweep
    #[arg(long, value_delimiter = ',', default_value = "0.001,0.003,0.01,0.03", value_name = "LIST")]
    pub sweep_rates: Vec<f64>,

    /// Restarts per rate for --sweep
    #[arg(long, default_value_t = DEFAULT_SWEEP_RESTARTS)]
    pub sweep_restarts: usize,

    /// Trees drawn from the fitted posterior for trees.nwk and metrics.csv
    #[arg(long, default_value_t = 1000)]
    pub n_tree_samples: usize,

    /// Also write plot.svg with the estimate trace and metric histograms
    #[arg(long)]
    pub plot: bool,

    /// Output directory
    #[arg(long, env = OUT_DIR_ENV, default_value = "vipr-out", value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MllArgs {
    /// Fitted parameters written by `infer`
    pub params: PathBuf,

    /// The alignment the parameters were fitted to
    pub fasta: PathBuf,

    /// Importance samples
    #[arg(long, default_value_t = 1000)]
    pub n_samples: usize,

    /// Effective population size of the coalescent prior
    #[arg(long, default_value_t = vipr::prior::DEFAULT_POP_SIZE)]
    pub pop_size: f64,

    /// Random seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Accepted for symmetry with other subcommands; output is always reproducible
    #[arg(long)]
    pub deterministic: bool,

    /// Print a JSON object instead of text
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Fitted parameters written by `infer`
    pub params: PathBuf,

    /// Number of trees
    #[arg(long, default_value_t = 1)]
    pub n: usize,

    /// Random seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Accepted for symmetry with other subcommands; output is always reproducible
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Number of taxa
    #[arg(long)]
    pub taxa: usize,

    /// Number of alignment columns
    #[arg(long)]
    pub sites: usize,

    /// Effective population size
    #[arg(long, default_value_t = vipr::prior::DEFAULT_POP_SIZE)]
    pub pop_size: f64,

    /// Random seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Accepted for symmetry with other subcommands; output is always reproducible
    #[arg(long)]
    pub deterministic: bool,

    /// Output directory
    #[arg(long, env = OUT_DIR_ENV, default_value = "vipr-sim", value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// fast (seconds) or full (acceptance sample sizes)
    #[arg(long, default_value = "fast")]
    pub level: Level,

    /// Run only these checks (comma separated)
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub only: Vec<String>,

    /// Random seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Print per-check details
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Taxon counts to time
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64", value_name = "LIST")]
    pub taxa_list: Vec<usize>,

    /// Minimum timed repetitions per point
    #[arg(long, default_value_t = 1)]
    pub iters: usize,

    /// Minimum timed wallclock per point, in milliseconds
    #[arg(long, default_value_t = 200, value_name = "MS")]
    pub min_time_ms: u64,

    /// Estimators to time alongside the density path
    #[arg(long, value_delimiter = ',', default_value = "loor,reparam,vimco", value_name = "LIST")]
    pub estimators: Vec<Estimator>,

    /// Trees per estimator iteration
    #[arg(long, default_value_t = 10, value_name = "K")]
    pub batch_size: usize,

    /// Alignment columns of the simulated data used for estimator timings
    #[arg(long, default_value_t = 100)]
    pub sites: usize,

    /// Random seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Output directory for scaling.csv and slopes.csv
    #[arg(long, env = OUT_DIR_ENV, default_value = "vipr-bench", value_name = "DIR")]
    pub out: PathBuf,
}
