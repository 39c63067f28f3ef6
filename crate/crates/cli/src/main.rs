//! `shapley`: exact and sampled Shapley values, bounds and coverage experiments.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use shapley_core::ShapleyError;

#[derive(Debug, Parser)]
#[command(name = "shapley", version, about = "Shapley value estimation with finite-sample error bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact Shapley values by enumeration.
    Exact {
        #[command(flatten)]
        common: Common,
        /// Enumerate permutations instead of coalitions (n <= 10).
        #[arg(long)]
        permutations: bool,
    },
    /// Permutation sampling for every player.
    EstimateSrs(SrsArgs),
    /// Stratified sampling over coalition sizes.
    EstimateStratified(StratifiedArgs),
    /// Sample sizes, error bounds and game constants.
    Bounds(BoundsArgs),
    /// Repeated estimation against ground truth.
    Coverage(CoverageArgs),
    /// Aggregate stratified bound versus the SRS floor.
    Compare(CompareArgs),
    /// Mean absolute error and bound over a grid of budgets.
    Curve(CurveArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Game definition file (JSON).
    #[arg(long)]
    pub game: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Add the IEEE-754 bits of every float to JSON rows.
    #[arg(long)]
    pub raw_bits: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SrsBound {
    Hoeffding,
    Chebyshev,
}

#[derive(Debug, Args)]
pub struct SrsArgs {
    #[command(flatten)]
    pub common: Common,
    /// Number of permutations; derived from --epsilon and --delta when omitted.
    #[arg(long)]
    pub m: Option<u64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Range of marginal contributions (Hoeffding).
    #[arg(long)]
    pub range: Option<f64>,
    /// Variance of marginal contributions (Chebyshev).
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Inequality used for sizing and the reported bound.
    #[arg(long, value_enum)]
    pub bound: Option<SrsBound>,
}

#[derive(Debug, Args)]
pub struct StratifiedArgs {
    #[command(flatten)]
    pub common: Common,
    /// Samples per player; derived from --epsilon when omitted.
    #[arg(long)]
    pub m: Option<u64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub beta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Only estimate this player.
    #[arg(long)]
    pub player: Option<usize>,
    /// Range constant d = 2(b - a); computed from the game when omitted.
    #[arg(long)]
    pub d: Option<f64>,
    /// Sample saturated strata with replacement instead of enumerating them.
    #[arg(long)]
    pub no_exhaust: bool,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.05)]
    pub beta: f64,
    #[arg(long)]
    pub m: Option<u64>,
    #[arg(long)]
    pub range: Option<f64>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub d: Option<f64>,
    /// Player count when no game is given.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CoverageKind {
    Chebyshev,
    Hoeffding,
    Stratified,
    Clt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    CltDemo,
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub preset: Option<Preset>,
    #[arg(long, value_enum, default_value = "hoeffding")]
    pub method: CoverageKind,
    #[arg(long, default_value_t = 0)]
    pub player: usize,
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    /// Overall confidence parameter for the stratified method.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Samples per trial for the CLT baseline.
    #[arg(long, default_value_t = 30)]
    pub m: u64,
    #[arg(long)]
    pub no_exhaust: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub m: u64,
    /// Player count; taken from --game when omitted.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub beta: f64,
    #[arg(long)]
    pub d: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CurveKind {
    Hoeffding,
    Chebyshev,
    Stratified,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 0)]
    pub player: usize,
    #[arg(long, value_enum, default_value = "hoeffding")]
    pub method: CurveKind,
    /// Comma-separated budgets.
    #[arg(long, value_delimiter = ',', default_values_t = [100u64, 400, 1600])]
    pub m_grid: Vec<u64>,
    #[arg(long, default_value_t = 200)]
    pub seeds_per_point: u64,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Failure classes with distinct exit codes.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Infeasible(String),
    Io(String),
    Budget(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Io(_) => 4,
            CliError::Budget(_) => 5,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Config(m) => format!("config error: {m}"),
            CliError::Infeasible(m) => format!("infeasible: {m}"),
            CliError::Io(m) => format!("i/o error: {m}"),
            CliError::Budget(m) => format!("budget too small: {m}"),
        }
    }
}

impl From<ShapleyError> for CliError {
    fn from(e: ShapleyError) -> Self {
        match e {
            ShapleyError::Infeasible { .. } | ShapleyError::NoGroundTruth(_) => CliError::Infeasible(e.to_string()),
            ShapleyError::BudgetTooSmall { .. } => CliError::Budget(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Exact { common, permutations } => commands::exact(&common, permutations).map(|d| (common, d)),
        Command::EstimateSrs(args) => commands::estimate_srs(&args).map(|d| (args.common, d)),
        Command::EstimateStratified(args) => commands::estimate_stratified(&args).map(|d| (args.common, d)),
        Command::Bounds(args) => commands::bounds(&args).map(|d| (args.common, d)),
        Command::Coverage(args) => commands::coverage(&args).map(|d| (args.common, d)),
        Command::Compare(args) => commands::compare(&args).map(|d| (args.common, d)),
        Command::Curve(args) => commands::curve(&args).map(|d| (args.common, d)),
    };
    match result.and_then(|(common, doc)| commands::emit(&common, &doc)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("shapley: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
