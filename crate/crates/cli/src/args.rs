use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lsmi_sinkhorn::data::SyntheticKind;
use lsmi_sinkhorn::matching::RoundingMethod;

#[derive(Debug, Parser)]
#[command(name = "lsmi", version, about = "Semi-supervised SMI estimation with entropic transport")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate SMI from paired and unpaired samples.
    Estimate(EstimateArgs),
    /// Match rows of two feature tables given a few known pairs.
    Match(MatchArgs),
    /// Lay items out on a grid with fixed anchors.
    Summarize(SummarizeArgs),
    /// Write a synthetic data set as CSV tables.
    Generate(GenerateArgs),
    /// Time fits over a sweep of unpaired sample sizes.
    Benchmark(BenchmarkArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Random,
    Linear,
    Nonlinear,
    Pca,
}

impl From<Kind> for SyntheticKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Random => SyntheticKind::Random,
            Kind::Linear => SyntheticKind::Linear,
            Kind::Nonlinear => SyntheticKind::Nonlinear,
            Kind::Pca => SyntheticKind::Pca,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Greedy,
    Optimal,
}

impl From<Method> for RoundingMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Greedy => RoundingMethod::Greedy,
            Method::Optimal => RoundingMethod::Optimal,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Seed for every random choice in the run.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (created if missing).
    #[arg(long, default_value = "lsmi-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Number of basis functions.
    #[arg(long, default_value_t = 200)]
    pub b: usize,
    #[arg(long, default_value_t = 0.3)]
    pub epsilon: f64,
    /// Ridge weight. Giving both --lambda and --beta skips cross-validation.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Weight of the paired term, in [0, 1].
    #[arg(long)]
    pub beta: Option<f64>,
    /// Cross-validate even when --lambda and --beta are both given.
    #[arg(long)]
    pub cv: bool,
    /// Maximum outer iterations.
    #[arg(long, default_value_t = 20)]
    pub max_iters: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SyntheticArgs {
    /// Generate data instead of reading files.
    #[arg(long, value_enum)]
    pub synthetic: Option<Kind>,
    /// Paired sample count.
    #[arg(long)]
    pub n: Option<usize>,
    /// Unpaired x count.
    #[arg(long)]
    pub nx: Option<usize>,
    /// Unpaired y count.
    #[arg(long)]
    pub ny: Option<usize>,
    /// Dimension of synthetic x.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Noise standard deviation for synthetic y.
    #[arg(long)]
    pub noise_sd: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub synthetic: SyntheticArgs,
    /// x feature table (rows are samples).
    #[arg(long)]
    pub x: Option<PathBuf>,
    /// y feature table (rows are samples).
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// Two-column (x row, y row) index file of known pairs. Without it, --x
    /// and --y are row-aligned and split by --n/--nx/--ny.
    #[arg(long)]
    pub paired: Option<PathBuf>,
    /// Single table whose columns are split into x and y by correlation.
    #[arg(long, conflicts_with_all = ["x", "y", "synthetic"])]
    pub table: Option<PathBuf>,
    /// Number of x columns when splitting --table.
    #[arg(long, requires = "table")]
    pub dx: Option<usize>,
    /// Also write the transport plan as plan.csv.
    #[arg(long)]
    pub save_plan: bool,
}

#[derive(Debug, Clone, Args)]
pub struct MatchArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    /// Two-column (x row, y row) index file of known pairs.
    #[arg(long)]
    pub paired: Option<PathBuf>,
    /// Two-column index file of true correspondences for scoring.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// One label per x row, for class accuracy.
    #[arg(long, requires = "labels_y")]
    pub labels_x: Option<PathBuf>,
    /// One label per y row.
    #[arg(long, requires = "labels_x")]
    pub labels_y: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Method::Optimal)]
    pub method: Method,
    #[arg(long)]
    pub save_plan: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SummarizeArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Item feature table (rows are items).
    #[arg(long)]
    pub features: PathBuf,
    /// Rectangular grid, e.g. 16x20.
    #[arg(long, conflicts_with = "grid_file")]
    pub grid: Option<String>,
    /// Coordinate table (two columns) or character mask.
    #[arg(long)]
    pub grid_file: Option<PathBuf>,
    /// Two-column (item, position) index file of fixed placements.
    #[arg(long)]
    pub anchors: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub synthetic: Kind,
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[arg(long, default_value_t = 500)]
    pub nx: usize,
    #[arg(long, default_value_t = 500)]
    pub ny: usize,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub noise_sd: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated n_x = n_y sizes.
    #[arg(long, value_delimiter = ',', default_value = "100,200,400,800")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 200)]
    pub b: usize,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    /// manifest.json from an earlier run.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for the re-run.
    #[arg(long)]
    pub out: PathBuf,
}
