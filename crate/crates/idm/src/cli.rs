use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::ModeArg;
use crate::data::{DataSpec, FixtureName};
use crate::io::Format;

#[derive(Debug, Parser)]
#[command(
    name = "idm",
    version,
    about = "Iterated diffusion maps: fixtures, bandwidth tuning, derivative estimates, diffusion passes and the feature-driven iteration",
    after_help = "Exit codes: 0 success, 2 usage, 3 data validation or file access, 4 numerical failure."
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML experiment file; flags override its keys.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Seed for fixture sampling and the eigensolver start block.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker cap. The pipeline currently runs on one thread.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Matrix file format for written embeddings and fixtures.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

/// Pipeline parameters shared by the analysis commands.
#[derive(Debug, Clone, Default, Args)]
pub struct PipelineArgs {
    /// Step size tau in [0, 1).
    #[arg(long)]
    pub tau: Option<f64>,
    /// Number of IDM iterations.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Neighbors per point.
    #[arg(long)]
    pub k: Option<usize>,
    /// Neighbors in the global bandwidth average.
    #[arg(long)]
    pub k2: Option<usize>,
    /// Nontrivial diffusion coordinates kept.
    #[arg(long)]
    pub modes: Option<usize>,
    /// Bandwidth selection rule.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Bandwidth grid length.
    #[arg(long)]
    pub grid_len: Option<usize>,
    /// Fixed diffusion time (default: 10 eps per pass).
    #[arg(long)]
    pub diffusion_time: Option<f64>,
    /// Stop when the held-out decoder residual stops improving.
    #[arg(long, value_name = "FRACTION")]
    pub cv_holdout: Option<f64>,
    /// Restrict derivatives to the estimated tangent frame.
    #[arg(long)]
    pub tangent_projection: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic fixture: points, every named feature, latent parameters.
    Generate(GenerateArgs),
    /// Bandwidth scans and dimension estimates per point.
    Tune(TuneArgs),
    /// Local derivative estimates of the feature map.
    Derivative(DerivativeArgs),
    /// One (optionally feature-biased) rescaled diffusion map.
    DiffusionMap(DiffusionMapArgs),
    /// The iterated diffusion map with per-iteration artifacts.
    Idm(IdmArgs),
    /// Diagnostics on a trajectory directory written by `idm`.
    Eval(EvalArgs),
    /// Extend a diffusion map to new points.
    Nystrom(NystromArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(value_enum)]
    pub fixture: FixtureName,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub grid: Option<usize>,
    /// Covariance scale of added Gaussian noise.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub noise_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub data: DataSpec,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Samples whose full scan tables are written.
    #[arg(long, value_delimiter = ',')]
    pub points: Vec<usize>,
    /// Also write the table of the sample nearest to this point.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub base_point: Option<Vec<f64>>,
    /// Scan only the table samples instead of the whole cloud.
    #[arg(long)]
    pub only_tables: bool,
    /// Record singular values and scaling laws in simple mode too.
    #[arg(long)]
    pub singular_values: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Estimator {
    /// Weighted least squares.
    Regression,
    /// Least squares restricted to the tangent frame.
    Tangent,
    /// Weighted cross-correlation.
    Correlation,
}

#[derive(Debug, Args)]
pub struct DerivativeArgs {
    #[command(flatten)]
    pub data: DataSpec,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long, value_enum, default_value = "regression")]
    pub estimator: Estimator,
}

#[derive(Debug, Args)]
pub struct DiffusionMapArgs {
    #[command(flatten)]
    pub data: DataSpec,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Write the symmetric kernel as COO triplets.
    #[arg(long)]
    pub dump_kernel: bool,
}

#[derive(Debug, Args)]
pub struct IdmArgs {
    #[command(flatten)]
    pub data: DataSpec,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Extra diagnostics (neighbors, contraction, identity, kernel, decoder).
    #[arg(long, value_delimiter = ',')]
    pub diagnostics: Vec<String>,
    #[command(flatten)]
    pub base: BaseArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct BaseArgs {
    /// Base sample index for neighbor tracking.
    #[arg(long)]
    pub base: Option<usize>,
    /// Base given as coordinates; the nearest sample is used.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub base_point: Option<Vec<f64>>,
    /// Neighbors tracked per iteration.
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalKind {
    /// Euclidean, geodesic and rescaled diffusion distances from a base sample.
    Distances,
    /// Neighbor lists of a base sample in every iteration.
    Neighbors,
    /// Linear decoder from each iteration to the feature's diffusion coordinates.
    Decoder,
    /// Deviation of the tangent-restricted derivative from an isometry.
    Fixedpoint,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(value_enum)]
    pub which: EvalKind,
    /// Trajectory directory.
    #[arg(long, value_name = "DIR")]
    pub dir: PathBuf,
    /// Diffusion times for `distances`.
    #[arg(long, value_delimiter = ',', default_values_t = [1e-4, 1e-3, 1e-2])]
    pub times: Vec<f64>,
    /// Neighbors for `fixedpoint`.
    #[arg(long)]
    pub k: Option<usize>,
    #[command(flatten)]
    pub base: BaseArgs,
}

#[derive(Debug, Args)]
pub struct NystromArgs {
    #[command(flatten)]
    pub data: DataSpec,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Points to extend to (CSV or JSON).
    #[arg(long, value_name = "FILE")]
    pub query: PathBuf,
}
