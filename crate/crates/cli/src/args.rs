use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(
    name = "ordpat",
    version,
    about = "Ordinal pattern dependence and structural break tests for paired time series"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Estimate p, q, r, s and the standardized coefficient with standard errors
    Analyze(AnalyzeArgs),
    /// CUSUM test for a change in (weighted) ordinal pattern dependence
    Breaktest(BreaktestArgs),
    /// Weighted dependence values, their break test, and the noisy-overlay experiment
    Awopd(AwopdArgs),
    /// Run a Monte Carlo study (null size, CLT check, power curve or power table)
    Simulate(StudyArgs),
    /// Power table over sample sizes, break positions and innovation laws
    Power(StudyArgs),
    /// Find the innovation coupling that yields a target coincidence probability
    Calibrate(CalibrateArgs),
    /// Write one simulated AR(1) pair
    Generate(GenerateArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Table,
    Csv,
    Json,
}

/// Options shared by every command; all may also come from `--config`.
#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Common {
    /// Pattern order (window length h + 1) [default: 2]
    #[arg(long = "h")]
    pub h: Option<usize>,
    /// Significance level [default: 0.05]
    #[arg(long)]
    pub level: Option<f64>,
    /// Long-run variance kernel: bartlett or parzen [default: bartlett]
    #[arg(long)]
    pub kernel: Option<String>,
    /// Bandwidth: `log` for ln(n) or a positive number [default: log]
    #[arg(long)]
    pub bandwidth: Option<String>,
    /// Pattern metric: discrete, l1, chaos, or a JSON metric document [default: discrete]
    #[arg(long)]
    pub metric: Option<String>,
    /// Weight: indicator, l1-step, or a JSON metric document with `weights` [default: indicator]
    #[arg(long)]
    pub weight: Option<String>,
    /// Random seed [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output format [default: table]
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// JSON file with defaults for any option
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Directory for result files
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Allow h above the default cap of 8 (up to 10)
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub large_order: Option<bool>,
    /// Lift the h <= 4 guard on covariance-matrix estimates
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub allow_large_dimension: Option<bool>,
}

/// Where the paired series comes from.
#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Input {
    /// One CSV file holding both series
    #[arg(long)]
    pub pair: Option<PathBuf>,
    /// CSV file of the first series (aligned with --y-file by date)
    #[arg(long)]
    pub x_file: Option<PathBuf>,
    /// CSV file of the second series
    #[arg(long)]
    pub y_file: Option<PathBuf>,
    /// Column of X in --pair [default: x]
    #[arg(long)]
    pub x_col: Option<String>,
    /// Column of Y in --pair [default: y]
    #[arg(long)]
    pub y_col: Option<String>,
    /// Date column [default: Date for --x-file/--y-file, date for --pair]
    #[arg(long)]
    pub date_col: Option<String>,
    /// Value column of --x-file and --y-file [default: Close]
    #[arg(long)]
    pub value_col: Option<String>,
    /// Field delimiter [default: ,]
    #[arg(long)]
    pub delimiter: Option<char>,
    /// Analyze (X, -Y) instead of (X, Y)
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub negate_y: Option<bool>,
    /// First date of the window (with --count: first date on or after it)
    #[arg(long)]
    pub start: Option<String>,
    /// Last date of the window
    #[arg(long)]
    pub end: Option<String>,
    /// Number of observations in the window
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub input: Input,
}

#[derive(Args, Debug)]
pub struct BreaktestArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub input: Input,
    /// Maximize signed instead of absolute partial sums
    #[arg(long)]
    pub one_sided: bool,
    /// Trajectory CSV path [default: <out>/trajectory.csv when --out is set]
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AwopdArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub input: Input,
    /// Skip the break test
    #[arg(long)]
    pub no_test: bool,
    /// Run the noisy-overlay experiment with this many replications
    #[arg(long)]
    pub noisy_overlay: Option<usize>,
}

#[derive(Args, Debug)]
pub struct StudyArgs {
    #[command(flatten)]
    pub common: Common,
    /// Study kind: null-size, clt-check, power-curve, power-table
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub replications: Option<usize>,
    /// Sample sizes (repeatable)
    #[arg(long = "n")]
    pub ns: Vec<usize>,
    #[arg(long)]
    pub phi: Option<f64>,
    /// Innovation laws: gaussian, student_t(df), cauchy (repeatable)
    #[arg(long = "innovation")]
    pub innovations: Vec<String>,
    /// Coupling before the break, as a coincidence probability
    #[arg(long, conflicts_with = "pre_rho")]
    pub pre_p: Option<f64>,
    /// Coupling before the break, as rho
    #[arg(long)]
    pub pre_rho: Option<f64>,
    /// Post-break coincidence probabilities (repeatable)
    #[arg(long = "post-p", conflicts_with = "post_rho")]
    pub post_p: Vec<f64>,
    /// Post-break couplings as rho (repeatable)
    #[arg(long = "post-rho")]
    pub post_rho: Vec<f64>,
    /// Break positions as fractions of n (repeatable)
    #[arg(long = "break-fraction")]
    pub break_fractions: Vec<f64>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Calibration table CSV [default: the bundled table]
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Include per-replication statistics in JSON output
    #[arg(long)]
    pub keep_samples: bool,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 0.1)]
    pub phi: f64,
    #[arg(long, default_value = "gaussian")]
    pub innovation: String,
    /// Target coincidence probability
    #[arg(long)]
    pub target: f64,
    /// Windows per Monte Carlo evaluation
    #[arg(long, default_value_t = 1_000_000)]
    pub windows: usize,
    #[arg(long, default_value_t = 5e-4)]
    pub tolerance: f64,
    /// Calibration table to update (created if missing)
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 0.1)]
    pub phi: f64,
    #[arg(long, default_value_t = 0.0)]
    pub rho: f64,
    #[arg(long, default_value = "gaussian")]
    pub innovation: String,
    #[arg(long = "n", default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub burn_in: usize,
    /// 1-based index of the first post-break observation
    #[arg(long, requires = "post_rho")]
    pub change_at: Option<usize>,
    #[arg(long)]
    pub post_rho: Option<f64>,
    #[arg(long)]
    pub post_phi: Option<f64>,
}

/// The options of a config file: shared options, input, and study overrides.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct ConfigFile {
    #[serde(flatten)]
    pub common: Common,
    pub input: Input,
    pub study: Option<serde_json::Value>,
}

macro_rules! merge_fields {
    ($dst:expr, $src:expr, $($f:ident),*) => {
        $( if $dst.$f.is_none() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl Common {
    /// Fills unset options from `file`.
    pub fn merge(&mut self, file: &Common) {
        merge_fields!(
            self,
            file,
            h,
            level,
            kernel,
            bandwidth,
            metric,
            weight,
            seed,
            format,
            out,
            large_order,
            allow_large_dimension
        );
    }
}

impl Input {
    pub fn merge(&mut self, file: &Input) {
        merge_fields!(
            self, file, pair, x_file, y_file, x_col, y_col, date_col, value_col, delimiter, negate_y, start, end, count
        );
    }
}
