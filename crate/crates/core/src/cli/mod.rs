//! The `bmc` command-line driver.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numeric
//! failure (divergence, failed decomposition).

mod commands;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::BmcError;
use crate::solver::{BoundUpdate, ResidualRecord};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "bmc", version, about = "Bounded manifold completion", args_conflicts_with_subcommands = true)]
pub struct Cli {
    /// Re-run the command recorded in a manifest from an earlier run.
    #[arg(long, value_name = "MANIFEST")]
    pub manifest_in: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample or extract a point cloud and write it as CSV.
    Generate {
        #[command(subcommand)]
        dataset: Dataset,
    },
    /// Build bounds and recover a low-rank squared-distance matrix.
    Solve(SolveArgs),
    /// Spectral embedding of a recovered matrix.
    Embed(EmbedArgs),
    /// Clustering and neighborhood errors of an embedding.
    Metrics(MetricsArgs),
    /// Solve for several truncation ranks and summarize tail mass.
    SweepR(SweepArgs),
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Point-cloud CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Labels CSV (defaults to `<out stem>-labels.csv` when labels exist).
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Dataset {
    /// Hollowed semi-cylinder of radius 4 by default.
    SemiCylinder {
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4.0)]
        radius: f64,
        /// θ interval `lo:hi` in radians; repeat for a union.
        #[arg(long = "theta-range", value_parser = parse_range)]
        theta_ranges: Vec<(f64, f64)>,
        /// z interval `lo:hi`; repeat for a union.
        #[arg(long = "z-range", value_parser = parse_range)]
        z_ranges: Vec<(f64, f64)>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Isotropic Gaussian blobs with labels.
    Clusters {
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long, default_value_t = 30)]
        per: usize,
        #[arg(long, default_value_t = 20)]
        dim: usize,
        #[arg(long, default_value_t = 10.0)]
        sep: f64,
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Per-digit subsample of an IDX (MNIST) image set.
    Mnist {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,1,3,4")]
        digits: Vec<u8>,
        #[arg(long, default_value_t = 30)]
        per_digit: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Variance of additive Gaussian noise (0 for none).
        #[arg(long, default_value_t = 0.0)]
        noise_variance: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Add Gaussian noise to an existing point CSV.
    Noisy {
        #[arg(long)]
        points: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        variance: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundUpdateArg {
    Projected,
    Linearized,
}

impl From<BoundUpdateArg> for BoundUpdate {
    fn from(v: BoundUpdateArg) -> Self {
        match v {
            BoundUpdateArg::Projected => BoundUpdate::Projected,
            BoundUpdateArg::Linearized => BoundUpdate::Linearized,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolverFlags {
    /// Scale on squared ambient distances for lower bounds.
    #[arg(long, default_value_t = 0.1)]
    pub alpha_l: f64,
    /// Scale on squared ambient distances for upper bounds.
    #[arg(long, default_value_t = 10.0)]
    pub alpha_u: f64,
    /// Penalty growth factor per iteration.
    #[arg(long, default_value_t = 1.01)]
    pub rho: f64,
    /// Initial penalty for both constraints.
    #[arg(long, default_value_t = 0.05)]
    pub rho_init: f64,
    /// Initial bound penalty, if different from --rho-init.
    #[arg(long)]
    pub rho_eta_init: Option<f64>,
    #[arg(long, default_value_t = 500)]
    pub iters: usize,
    /// Relative residual for early stopping (0 runs every iteration).
    #[arg(long, default_value_t = 0.0)]
    pub tol: f64,
    /// Weight on the lower bound in the initial guess.
    #[arg(long, default_value_t = 0.8)]
    pub init_mix: f64,
    #[arg(long, default_value_t = 1)]
    pub record_every: usize,
    #[arg(long, value_enum, default_value_t = BoundUpdateArg::Projected)]
    pub bound_update: BoundUpdateArg,
    /// Recorded in the manifest; the solver itself draws no random numbers.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Print a progress line to stderr every N iterations (0 for none).
    #[arg(long, default_value_t = 0)]
    pub progress: usize,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Point-cloud CSV; bounds are alpha-scaled squared distances.
    #[arg(long, conflicts_with_all = ["lower", "upper"], required_unless_present_all = ["lower", "upper"])]
    pub points: Option<PathBuf>,
    /// Lower-bound matrix CSV.
    #[arg(long, requires = "upper")]
    pub lower: Option<PathBuf>,
    /// Upper-bound matrix CSV (entries ≥ 1e18 mean unbounded).
    #[arg(long, requires = "lower")]
    pub upper: Option<PathBuf>,
    /// Truncation rank.
    #[arg(long)]
    pub r: usize,
    #[command(flatten)]
    pub solver: SolverFlags,
    #[arg(long)]
    pub out_prefix: PathBuf,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Squared-distance matrix CSV.
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub p: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub embedding: PathBuf,
    /// Original point cloud the embedding came from.
    #[arg(long)]
    pub points: PathBuf,
    /// Integer labels, one per line; enables the clustering row.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Cluster count (defaults to the number of distinct labels).
    #[arg(long)]
    pub k_clusters: Option<usize>,
    /// Neighborhood sizes 1..=knn-max are evaluated.
    #[arg(long, default_value_t = 20)]
    pub knn_max: usize,
    #[arg(long, default_value_t = crate::metrics::DEFAULT_RESTARTS)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub points: PathBuf,
    /// Comma-separated truncation ranks.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub r_list: Vec<usize>,
    #[command(flatten)]
    pub solver: SolverFlags,
    /// Worker threads (defaults to available parallelism).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out_prefix: PathBuf,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected lo:hi, got {s:?}"))?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad number {lo:?}"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad number {hi:?}"))?;
    Ok((lo, hi))
}

/// JSON record written by every command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name; replayed by `--manifest-in`.
    pub argv: Vec<String>,
    pub version: String,
    pub seed: Option<u64>,
    pub parameters: serde_json::Value,
    pub wall_time_secs: f64,
    pub iters_run: Option<usize>,
    pub final_residual: Option<ResidualRecord>,
    pub outputs: Vec<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] BmcError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Lib(e) => match e {
                BmcError::Parameter(_) | BmcError::Unsupported(_) => EXIT_USAGE,
                BmcError::Divergence { .. } | BmcError::Numeric(_) => EXIT_NUMERIC,
                _ => EXIT_DATA,
            },
        }
    }
}

pub(crate) fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub(crate) fn read_manifest(path: &Path) -> Result<RunManifest, CliError> {
    let text = fs::read_to_string(path).map_err(|e| BmcError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Lib(BmcError::Parse {
            path: path.display().to_string(),
            line: e.line(),
            msg: e.to_string(),
        })
    })
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match (cli.manifest_in, cli.command) {
        (Some(path), _) => replay(&path),
        (None, Some(command)) => {
            let argv = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
            commands::execute(command, argv)
        }
        (None, None) => Err(usage("no command given; see --help")),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn replay(path: &Path) -> Result<(), CliError> {
    let manifest = read_manifest(path)?;
    if manifest.argv.iter().any(|a| a == "--manifest-in") {
        return Err(usage("manifest argv must not itself contain --manifest-in"));
    }
    let full = std::iter::once("bmc".to_string()).chain(manifest.argv.iter().cloned());
    let cli = Cli::try_parse_from(full).map_err(|e| usage(format!("stored argv no longer parses: {e}")))?;
    let command = cli.command.ok_or_else(|| usage("manifest has no command"))?;
    commands::execute(command, manifest.argv)
}
