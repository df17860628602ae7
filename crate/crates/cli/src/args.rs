use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "spike", version, about = "Recursive SPIKE banded solver harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a random banded matrix with a given diagonal dominance.
    Gen(GenArgs),
    /// Measure the solve/factor cost constant K and optionally cache it.
    Calibrate(CalibrateArgs),
    /// Time factorization and solves for a list of thread counts.
    Bench(BenchArgs),
    /// Time factor + solve over a grid of partition ratios.
    SweepRatios(SweepArgs),
    /// Residual versus condition number for three solvers.
    Accuracy(AccuracyArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Mm,
    Spkb,
}

/// Band shape and generator flags shared by several commands.
#[derive(Args, Debug, Clone)]
pub struct MatrixArgs {
    /// Matrix order.
    #[arg(long)]
    pub n: Option<usize>,
    /// Half-bandwidth; sets both --kl and --ku.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub kl: Option<usize>,
    #[arg(long)]
    pub ku: Option<usize>,
    /// Degree of diagonal dominance of the generated matrix.
    #[arg(long, default_value_t = 1.5)]
    pub dd: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

impl MatrixArgs {
    pub fn bands(&self) -> (usize, usize) {
        let k = self.k.unwrap_or(0);
        (self.kl.unwrap_or(k), self.ku.unwrap_or(k))
    }
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[command(flatten)]
    pub matrix: MatrixArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// File format; inferred from the extension (.spkb) when omitted.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    /// Sample order (default 200 x the sample half-bandwidth).
    #[arg(long)]
    pub n: Option<usize>,
    /// Sample half-bandwidth, also used as the number of right-hand sides.
    #[arg(long, default_value_t = 64)]
    pub k: usize,
    /// Store the measured value in the cache file.
    #[arg(long)]
    pub write_cache: bool,
    /// Cache file (default: $SPIKE_K_CACHE, then ~/.config/spike/k_cache).
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

/// Solver configuration shared by `bench` and `sweep-ratios`.
#[derive(Args, Debug, Clone)]
pub struct SolverArgs {
    /// Read the matrix from a file instead of generating one.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[command(flatten)]
    pub gen: MatrixArgs,
    #[arg(long, default_value_t = 1)]
    pub nrhs: usize,
    /// Partial pivoting instead of diagonal boosting.
    #[arg(long)]
    pub pivot: bool,
    /// Relative size of boosted pivots.
    #[arg(long)]
    pub boost_eps: Option<f64>,
    /// Cost constant K; overrides the cache.
    #[arg(long)]
    pub ratio_k: Option<f64>,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Timed repetitions per measurement (median is reported).
    #[arg(long, default_value_t = 3)]
    pub runs: usize,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Comma-separated thread counts.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    pub threads: Vec<usize>,
    /// Also time transpose solves on the same factorization.
    #[arg(long)]
    pub transpose: bool,
    /// Explicit partition ratios (both required); override K.
    #[arg(long, requires = "r13")]
    pub r12: Option<f64>,
    #[arg(long, requires = "r12")]
    pub r13: Option<f64>,
    /// Largest acceptable relative residual.
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 4)]
    pub threads: usize,
    /// Comma-separated R12 grid values.
    #[arg(long, value_delimiter = ',', default_value = "0.75,1,1.25,1.5")]
    pub r12: Vec<f64>,
    /// Comma-separated R13 grid values.
    #[arg(long, value_delimiter = ',', default_value = "1.5,2,2.5,3")]
    pub r13: Vec<f64>,
}

#[derive(Args, Debug)]
pub struct AccuracyArgs {
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Threads for the SPIKE solvers (2 gives two partitions).
    #[arg(long, default_value_t = 2)]
    pub threads: usize,
    /// Explicit comma-separated dominance levels instead of targeting one
    /// matrix per decade of condition number.
    #[arg(long, value_delimiter = ',')]
    pub dd: Option<Vec<f64>>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}
