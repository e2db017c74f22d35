use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "breakfront",
    version,
    about = "Identified sets and breakdown frontiers for IV designs with relaxed independence and monotonicity"
)]
pub struct Cli {
    /// Directory receiving every output file and the run manifest.
    #[arg(long, global = true, default_value = "breakfront-out")]
    pub out_dir: PathBuf,

    /// Worker threads for all parallel work.
    #[arg(long, global = true, env = "BREAKFRONT_JOBS")]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Identified sets over a grid of (c, pi_def).
    Bounds(BoundsArgs),
    /// Breakdown frontier, optionally with a bootstrap lower band.
    Frontier(FrontierArgs),
    /// Selection-on-observables calibration of c.
    Calibrate(CalibrateArgs),
    /// Monte Carlo study of the frontier estimator on the reference DGP.
    Simulate(SimulateArgs),
    /// Linear-programming sharp sets compared with the closed forms.
    Oracle(OracleArgs),
    /// Write the reference distribution as JSON.
    Reference,
    /// Draw micro-data from a distribution and write it as CSV.
    Sample(SampleArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ColumnArgs {
    #[arg(long, default_value = "y")]
    pub y: String,
    #[arg(long, default_value = "d")]
    pub d: String,
    #[arg(long, default_value = "z")]
    pub z: String,
    /// Covariate columns defining the cells (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct SourceArgs {
    /// Micro-data CSV with a header row.
    #[arg(long, conflicts_with = "dist", required_unless_present = "dist")]
    pub input: Option<PathBuf>,
    /// Distribution document (JSON).
    #[arg(long)]
    pub dist: Option<PathBuf>,
    #[command(flatten)]
    pub columns: ColumnArgs,
    /// Drop covariate cells missing an assignment arm instead of failing.
    #[arg(long)]
    pub drop_thin_cells: bool,
    /// Require every joint probability to lie strictly inside (0, 1).
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundsTarget {
    Itt,
    Late,
    Ate,
    PiCo,
}

#[derive(Debug, Args, Serialize)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Dependence parameter: a number or grid(lo,hi,n).
    #[arg(long)]
    pub c: String,
    /// Defier share: a number or grid(lo,hi,n).
    #[arg(long)]
    pub pi: String,
    #[arg(long, value_enum)]
    pub target: BoundsTarget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FrontierTarget {
    Itt,
    Late,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaArg {
    ConstantOne,
    BootstrapSd,
}

#[derive(Debug, Args, Serialize)]
pub struct BandArgs {
    /// Bootstrap draws.
    #[arg(long = "B", alias = "b", default_value_t = 999)]
    pub b: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// eps_N * sqrt(N).
    #[arg(long, default_value_t = 2.0)]
    pub eps_scale: f64,
    #[arg(long, value_enum, default_value = "constant-one")]
    pub sigma: SigmaArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct FrontierArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, value_enum)]
    pub target: FrontierTarget,
    /// Threshold of the conclusion `target >= mu`.
    #[arg(long, allow_hyphen_values = true)]
    pub mu: f64,
    /// Grid of c values: a number or grid(lo,hi,n).
    #[arg(long, default_value = "grid(0,0.15,100)")]
    pub grid: String,
    /// Allow grid values at or beyond min(p, 1 - p).
    #[arg(long)]
    pub any_regime: bool,
    /// Add a uniform lower confidence band (needs --input).
    #[arg(long, requires = "input")]
    pub band: bool,
    #[command(flatten)]
    pub band_args: BandArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub columns: ColumnArgs,
    /// Covariate(s) whose calibration statistic is computed.
    #[arg(long, value_delimiter = ',', required = true)]
    pub pivot: Vec<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long = "N", alias = "n", default_value_t = 1000)]
    pub n: usize,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Bootstrap draws per replication.
    #[arg(long = "B", alias = "b")]
    pub b: Option<usize>,
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long, value_enum, default_value = "late")]
    pub target: FrontierTarget,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub mu: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 2.0)]
    pub eps_scale: f64,
    #[arg(long, value_enum, default_value = "constant-one")]
    pub sigma: SigmaArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// 500 replications with 999 bootstrap draws.
    #[arg(long)]
    pub paper_scale: bool,
    /// Replace estimation by the exact DGP (pipeline self-test).
    #[arg(long)]
    pub exact: bool,
    /// Also write every replication's curve.
    #[arg(long)]
    pub dump_reps: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleTarget {
    Itt,
    Late,
    Ate,
    PiCo,
    ReducedForm,
    All,
}

#[derive(Debug, Args, Serialize)]
pub struct OracleArgs {
    /// Distribution document; the reference distribution when omitted.
    #[arg(long, conflicts_with = "conformance")]
    pub dist: Option<PathBuf>,
    /// Restrict to one covariate cell.
    #[arg(long)]
    pub cell: Option<String>,
    #[arg(long, default_value = "0")]
    pub c: String,
    #[arg(long, default_value = "0")]
    pub pi: String,
    #[arg(long, value_enum, default_value = "all")]
    pub target: OracleTarget,
    /// Random-case sweep with this many feasible cases.
    #[arg(long)]
    pub conformance: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Require compliers to outnumber defiers by 1e-9.
    #[arg(long)]
    pub strict_defiers: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct SampleArgs {
    /// Distribution document; the reference distribution when omitted.
    #[arg(long)]
    pub dist: Option<PathBuf>,
    #[arg(long = "N", alias = "n")]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}
