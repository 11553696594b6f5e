use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use prem_core::grid::{DEFAULT_GRID_SIZE, DEFAULT_U_MIN};
use prem_core::pr::DEFAULT_PERMUTATIONS;
use prem_core::prem::{DEFAULT_MAX_ITERATIONS, DEFAULT_TOL_DELTA};
use prem_core::{InitialDensity, Method, PremConfig};

#[derive(Debug, Parser)]
#[command(
    name = "prem",
    version,
    about = "Robust linear regression with predictive-recursion EM (PR-EM)",
    after_help = "Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure."
)]
pub struct Cli {
    /// Worker threads for parallel sections; results do not depend on it.
    #[arg(long, global = true, env = "PREM_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a regression and write a JSON report plus diagnostic CSVs.
    Fit(FitArgs),
    /// Run a simulation scenario file and write the MSE table as CSV.
    Simulate(SimulateArgs),
    /// Evaluate a one-coefficient likelihood slice.
    Profile(ProfileArgs),
    /// PR-EM Wald confidence intervals (or least-squares t intervals).
    Ci(CiArgs),
    /// List the bundled datasets or export one as CSV.
    Datasets(DatasetsArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Bundled dataset name (`phones`, `hbk`) or path to a CSV file with a header row.
    #[arg(long)]
    pub data: String,

    /// Response column (CSV input only).
    #[arg(long)]
    pub response: Option<String>,

    /// Comma-separated predictor columns (CSV input only; default: all other columns).
    #[arg(long, value_delimiter = ',')]
    pub predictors: Vec<String>,

    /// Do not add an intercept column (CSV input only).
    #[arg(long)]
    pub no_intercept: bool,
}

#[derive(Debug, Args)]
pub struct PremArgs {
    /// Seed for the PR permutations and any simulation.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Number of points M on the scale grid.
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    pub grid_size: usize,

    /// Lower end of the scale support.
    #[arg(long, default_value_t = DEFAULT_U_MIN)]
    pub u_min: f64,

    /// Upper end of the scale support [default: max(50, 3 * LS residual SD)].
    #[arg(long)]
    pub u_max: Option<f64>,

    /// Number of PR permutations averaged.
    #[arg(long, default_value_t = DEFAULT_PERMUTATIONS)]
    pub permutations: usize,

    /// PR-EM stops when the L1 change in the coefficients falls below this.
    #[arg(long, default_value_t = DEFAULT_TOL_DELTA)]
    pub tol: f64,

    /// Maximum number of PR-EM iterations.
    #[arg(long, default_value_t = DEFAULT_MAX_ITERATIONS)]
    pub max_iter: usize,

    /// Start PR from a truncated gamma density with this shape, with its
    /// mode at the LS residual SD [default: uniform start].
    #[arg(long)]
    pub gamma_shape: Option<f64>,
}

impl PremArgs {
    pub fn config(&self) -> PremConfig {
        PremConfig {
            grid_size: self.grid_size,
            u_min: self.u_min,
            u_max: self.u_max,
            initial_density: match self.gamma_shape {
                Some(shape) => InitialDensity::TruncatedGamma { shape },
                None => InitialDensity::Uniform,
            },
            n_permutations: self.permutations,
            seed: self.seed,
            tol_delta: self.tol,
            max_iterations: self.max_iter,
            ..PremConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Prem,
    Ls,
    Rls,
    #[value(name = "ml_t4")]
    MlT4,
    L1,
}

impl MethodArg {
    pub fn method(self) -> Method {
        match self {
            MethodArg::Prem => Method::Prem,
            MethodArg::Ls => Method::Ls,
            MethodArg::Rls => Method::Rls,
            MethodArg::MlT4 => Method::MlT4,
            MethodArg::L1 => Method::L1,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[arg(long, value_enum, default_value_t = MethodArg::Prem)]
    pub method: MethodArg,

    /// Output directory for report.json and the CSV files.
    #[arg(short, long)]
    pub out: PathBuf,

    /// Simulations for the residual quantile-plot envelope.
    #[arg(long, default_value_t = 99)]
    pub envelope_sims: usize,

    #[command(flatten)]
    pub prem: PremArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario file of `key = value` lines.
    #[arg(long)]
    pub scenario: PathBuf,

    /// Output CSV path.
    #[arg(short, long)]
    pub out: PathBuf,

    /// Overrides the seed given in the scenario file.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Engine {
    /// Permutation-averaged PR marginal log-likelihood.
    Pr,
    /// Profile log-likelihood with a grid NPMLE of the mixing distribution.
    Npmle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Hold {
    Ols,
    Prem,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Coefficient to vary, by 0-based index or by name.
    #[arg(long, default_value = "0")]
    pub coef: String,

    /// Lower end of the slice [default: held estimate - 1].
    #[arg(long)]
    pub lo: Option<f64>,

    /// Upper end of the slice [default: held estimate + 1].
    #[arg(long)]
    pub hi: Option<f64>,

    /// Number of equally spaced slice points.
    #[arg(long, default_value_t = 101)]
    pub count: usize,

    #[arg(long, value_enum, default_value_t = Engine::Pr)]
    pub engine: Engine,

    /// Where the other coefficients are held.
    #[arg(long, value_enum, default_value_t = Hold::Ols)]
    pub hold: Hold,

    /// EM iterations for the NPMLE engine.
    #[arg(long, default_value_t = prem_core::baselines::NPMLE_EM_ITERS)]
    pub em_iters: usize,

    /// Output CSV path [default: standard output].
    #[arg(short, long)]
    pub out: Option<PathBuf>,

    #[command(flatten)]
    pub prem: PremArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CiMethod {
    /// Wald intervals from the curvature of the PR log marginal likelihood.
    Prem,
    /// Classical least-squares t intervals.
    Ls,
}

#[derive(Debug, Args)]
pub struct CiArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Confidence level.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,

    #[arg(long, value_enum, default_value_t = CiMethod::Prem)]
    pub method: CiMethod,

    /// Output CSV path [default: standard output].
    #[arg(short, long)]
    pub out: Option<PathBuf>,

    #[command(flatten)]
    pub prem: PremArgs,
}

#[derive(Debug, Args)]
pub struct DatasetsArgs {
    /// Write this bundled dataset as CSV instead of listing.
    #[arg(long, requires = "out")]
    pub export: Option<String>,

    /// Output CSV path for --export.
    #[arg(short, long)]
    pub out: Option<PathBuf>,

    /// Accepted for uniformity; listing and export are deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
