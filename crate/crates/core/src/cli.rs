//! The `dpts` command line: `fit`, `ci`, `bounds`, `simulate` and
//! `suggest-theta`.
//!
//! Every flag is validated before the input file is opened. Exit codes:
//! 0 success, 2 usage, 3 data, 4 algorithm or constraint failure.

use std::ffi::OsString;
use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bounds::{self, BoundEstimator, BoundParams, BoundResult, ThetaSuggestion};
use crate::data::Dataset;
use crate::error::Error;
use crate::estimators::{self, FitResult, PrivateParams, Variant};
use crate::intervals::{dp_theil_sen_ci, CiParams, CiVariant, ConfidenceInterval};
use crate::sim::{self, EstimatorSpec, IntervalSpec, SimConfig, XDesign, SCHEMA_VERSION};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_ALGORITHM: i32 = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Usage(String),
    Data(String),
    Algorithm(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Algorithm(_) => EXIT_ALGORITHM,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Algorithm(m) => write!(f, "algorithm error: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::TooFewPoints { .. } | Error::NonFinitePoint { .. } => CliError::Data(msg),
            Error::InvalidParameter { .. } | Error::MissingParameter(_) | Error::InvalidConfig(_) => {
                CliError::Usage(msg)
            }
            _ => CliError::Algorithm(msg),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// `--theta` takes a number or `auto`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThetaArg {
    Auto,
    Value(f64),
}

impl FromStr for ThetaArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(ThetaArg::Auto);
        }
        s.parse::<f64>()
            .map(ThetaArg::Value)
            .map_err(|_| format!("expected a number or `auto`, got `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Tsv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitVariant {
    Ols,
    TheilSen,
    TheilSenHalf,
    /// DPTheilSen (all pairs).
    Ts,
    /// DPTheilSenHalf (one matching).
    Half,
    /// DPTheilSenkHalf (`--k` matchings).
    Khalf,
}

impl FitVariant {
    fn is_private(self) -> bool {
        matches!(self, FitVariant::Ts | FitVariant::Half | FitVariant::Khalf)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CiVariantArg {
    Ts,
    Half,
    Khalf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DesignArg {
    EquallySpaced,
    TwoPoint,
}

#[derive(Debug, Parser)]
#[command(name = "dpts", version, about = "Differentially private Theil-Sen regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Point estimate of the slope.
    Fit(FitArgs),
    /// Private confidence interval for the slope.
    Ci(CiArgs),
    /// Closed-form (1 - p)-convergence bounds.
    Bounds(BoundsArgs),
    /// Monte-Carlo campaign over an estimator / interval grid.
    Simulate(SimulateArgs),
    /// Widening parameter rule of thumb.
    SuggestTheta(SuggestThetaArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "x")]
    pub x_col: String,
    #[arg(long, default_value = "y")]
    pub y_col: String,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PrivacyArgs {
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Output range `[-R, R]`.
    #[arg(long)]
    pub range: Option<f64>,
    /// Widening parameter, or `auto`.
    #[arg(long)]
    pub theta: Option<ThetaArg>,
    /// Error scale for `--theta auto`; estimated from the data when absent.
    #[arg(long)]
    pub sigma_e: Option<f64>,
    /// x scale for `--theta auto`; computed from the data when absent.
    #[arg(long)]
    pub sigma_x: Option<f64>,
    #[arg(long)]
    pub tau_n: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub privacy: PrivacyArgs,
    #[arg(long, value_enum, default_value_t = FitVariant::Ts)]
    pub variant: FitVariant,
    #[arg(long)]
    pub k: Option<usize>,
    /// Only used by `--theta auto`.
    #[arg(long, default_value_t = 0.1)]
    pub p: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CiArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub privacy: PrivacyArgs,
    #[arg(long, value_enum, default_value_t = CiVariantArg::Half)]
    pub variant: CiVariantArg,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub p: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// Rows to print; all when absent.
    #[arg(long, value_delimiter = ',', value_parser = parse_bound_estimator)]
    pub estimator: Vec<BoundEstimator>,
    #[arg(long)]
    pub sigma_e: Option<f64>,
    #[arg(long)]
    pub sigma_x: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub p: f64,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub range: Option<f64>,
    #[arg(long)]
    pub theta: Option<ThetaArg>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub abs_beta: Option<f64>,
    #[arg(long)]
    pub r_u: Option<f64>,
    #[arg(long)]
    pub tau_n: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON `SimConfig`; replaces the grid flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "100")]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_e: f64,
    #[arg(long, value_enum, default_value_t = DesignArg::EquallySpaced)]
    pub design: DesignArg,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub x_lo: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub x_hi: f64,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub estimators: Vec<FitVariant>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub intervals: Vec<CiVariantArg>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub epsilon: Vec<f64>,
    #[arg(long, default_value_t = 10.0)]
    pub range: f64,
    /// A number, or `auto` for the rule of thumb at the true σ_e and design σ_x.
    #[arg(long, default_value = "auto")]
    pub theta: ThetaArg,
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub k: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    pub p: Vec<f64>,
    #[arg(long)]
    pub tau_n: Option<f64>,
    /// Also write the trial-0 dataset of the first configuration as CSV.
    #[arg(long)]
    pub dataset_out: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SuggestThetaArgs {
    #[arg(long)]
    pub sigma_e: Option<f64>,
    #[arg(long)]
    pub sigma_x: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub range: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub p: f64,
    #[arg(long)]
    pub tau_n: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn parse_bound_estimator(s: &str) -> Result<BoundEstimator, String> {
    BoundEstimator::parse(s).ok_or_else(|| {
        let names: Vec<_> = BoundEstimator::ALL.iter().map(|e| e.name()).collect();
        format!("unknown estimator `{s}`; expected one of {}", names.join(", "))
    })
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version are not errors
            if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                return EXIT_USAGE;
            }
            let _ = write!(stdout, "{}", e.render());
            return 0;
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "{e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    match command {
        Command::Fit(a) => cmd_fit(&a, stdout, stderr),
        Command::Ci(a) => cmd_ci(&a, stdout, stderr),
        Command::Bounds(a) => cmd_bounds(&a, stdout),
        Command::Simulate(a) => cmd_simulate(&a, stdout, stderr),
        Command::SuggestTheta(a) => cmd_suggest_theta(&a, stdout),
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn require<T>(v: Option<T>, flag: &str) -> CliResult<T> {
    v.ok_or_else(|| usage(format!("missing required flag {flag}")))
}

fn check_positive(v: f64, flag: &str) -> CliResult<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(usage(format!("{flag} must be finite and > 0, got {v}")))
    }
}

fn check_p(p: f64) -> CliResult<f64> {
    if p > 0.0 && p < 1.0 {
        Ok(p)
    } else {
        Err(usage(format!("--p must lie in (0, 1), got {p}")))
    }
}

fn check_k(k: Option<usize>, needed: bool) -> CliResult<Option<usize>> {
    match k {
        Some(0) => Err(usage("--k must be at least 1")),
        None if needed => Err(usage("missing required flag --k")),
        k => Ok(k),
    }
}

/// Privacy flags checked before any data is read. `theta` is `None` for
/// `auto`, resolved once the data (or supplied σ values) are known.
struct PrivacyPlan {
    epsilon: f64,
    range: f64,
    theta: Option<f64>,
}

fn plan_privacy(a: &PrivacyArgs) -> CliResult<PrivacyPlan> {
    let epsilon = check_positive(require(a.epsilon, "--epsilon")?, "--epsilon")?;
    let range = check_positive(require(a.range, "--range")?, "--range")?;
    let theta = match require(a.theta, "--theta")? {
        ThetaArg::Auto => None,
        ThetaArg::Value(t) => {
            let t = check_positive(t, "--theta")?;
            if t >= range {
                return Err(usage(format!("--theta ({t}) must be smaller than --range ({range})")));
            }
            Some(t)
        }
    };
    for (v, flag) in [(a.sigma_e, "--sigma-e"), (a.sigma_x, "--sigma-x"), (a.tau_n, "--tau-n")] {
        if let Some(v) = v {
            check_positive(v, flag)?;
        }
    }
    Ok(PrivacyPlan { epsilon, range, theta })
}

/// Resolves `--theta auto`, warning when the σ values come from the data.
fn resolve_theta(
    plan: &PrivacyPlan,
    a: &PrivacyArgs,
    p: f64,
    d: &Dataset,
    stderr: &mut dyn Write,
) -> CliResult<f64> {
    if let Some(t) = plan.theta {
        return Ok(t);
    }
    let estimated = a.sigma_e.is_none() || a.sigma_x.is_none();
    let sigma_x = match a.sigma_x {
        Some(s) => s,
        None => d.x_variance().sqrt(),
    };
    let sigma_e = match a.sigma_e {
        Some(s) => s,
        None => residual_sd(d)?,
    };
    if estimated {
        let _ = writeln!(
            stderr,
            "WARNING: --theta auto estimated sigma_e/sigma_x from the input data. \
             The resulting theta depends on the private data and is NOT covered by the \
             differential privacy guarantee. Pass --sigma-e and --sigma-x to avoid this."
        );
    }
    let mut bp = BoundParams::new(sigma_e, sigma_x, d.len(), p);
    bp.epsilon = Some(plan.epsilon);
    bp.range = Some(plan.range);
    bp.tau_n = a.tau_n;
    let s = bounds::suggest_theta(&bp)?;
    if s.theta >= plan.range {
        return Err(CliError::Algorithm(format!(
            "auto theta {} is not smaller than range {}",
            s.theta, plan.range
        )));
    }
    let _ = writeln!(stderr, "note: auto theta = {}", s.theta);
    Ok(s.theta)
}

/// Residual standard deviation of the least-squares line.
fn residual_sd(d: &Dataset) -> CliResult<f64> {
    if d.len() < 3 {
        return Err(CliError::Data("--theta auto needs at least 3 rows to estimate sigma_e".into()));
    }
    let fit = estimators::ols_fit(d)?;
    let alpha = fit.alpha.unwrap_or(0.0);
    let ss: f64 = d
        .points()
        .iter()
        .map(|p| (p.y - alpha - fit.beta * p.x).powi(2))
        .sum();
    let sd = (ss / (d.len() - 2) as f64).sqrt();
    if sd > 0.0 {
        Ok(sd)
    } else {
        Err(CliError::Data("residual sigma_e estimate is 0; pass --sigma-e".into()))
    }
}

/// Reads `x_col` and `y_col` from a headed, comma-separated UTF-8 file.
/// Malformed rows are errors, reported with their line number.
pub fn read_dataset(path: &Path, x_col: &str, y_col: &str) -> CliResult<Dataset> {
    let file = File::open(path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("cannot read header: {e}")))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CliError::Data(format!("column `{name}` not found in header")))
    };
    let (xi, yi) = (col(x_col)?, col(y_col)?);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Data(format!("malformed row: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize, name: &str| -> CliResult<f64> {
            let raw = rec.get(i).unwrap_or("").trim();
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Data(format!("line {line}: `{name}` value `{raw}` is not a finite number")))
        };
        xs.push(field(xi, x_col)?);
        ys.push(field(yi, y_col)?);
    }
    Ok(Dataset::from_xy(&xs, &ys)?)
}

fn open_output(out: &OutputArgs, stdout: &mut dyn Write, f: impl FnOnce(&mut dyn Write) -> CliResult<()>) -> CliResult<()> {
    match &out.output {
        Some(path) => {
            let file = File::create(path)
                .map_err(|e| usage(format!("cannot create {}: {e}", path.display())))?;
            let mut w = BufWriter::new(file);
            f(&mut w)?;
            w.flush().map_err(io_err)
        }
        None => f(stdout),
    }
}

fn io_err(e: io::Error) -> CliError {
    CliError::Data(format!("write failed: {e}"))
}

fn write_json<T: Serialize>(w: &mut dyn Write, value: &T) -> CliResult<()> {
    let s = serde_json::to_string_pretty(value).expect("output serializes");
    writeln!(w, "{s}").map_err(io_err)
}

fn write_table<T: Serialize>(w: &mut dyn Write, rows: &[T], format: Format) -> CliResult<()> {
    let delimiter = if format == Format::Tsv { b'\t' } else { b',' };
    let mut wtr = csv::WriterBuilder::new().delimiter(delimiter).from_writer(w);
    for r in rows {
        wtr.serialize(r).map_err(|e| CliError::Data(format!("write failed: {e}")))?;
    }
    wtr.flush().map_err(io_err)
}

#[derive(Serialize)]
struct FitOutput<'a> {
    schema_version: u32,
    command: &'static str,
    seed: u64,
    #[serde(flatten)]
    result: &'a FitResult,
}

#[derive(Serialize)]
struct FitRow {
    schema_version: u32,
    variant: &'static str,
    beta: f64,
    alpha: Option<f64>,
    epsilon: Option<f64>,
    eps_mech: Option<f64>,
    range: Option<f64>,
    theta: Option<f64>,
    k: Option<usize>,
    n: usize,
    n_slopes: usize,
    seed: u64,
}

pub fn cmd_fit(a: &FitArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    check_p(a.p)?;
    let k = check_k(a.k, a.variant == FitVariant::Khalf)?;
    let privacy = if a.variant.is_private() {
        Some(plan_privacy(&a.privacy)?)
    } else {
        None
    };

    let d = read_dataset(&a.input.input, &a.input.x_col, &a.input.y_col)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let result = match (a.variant, privacy) {
        (FitVariant::Ols, _) => estimators::ols_fit(&d)?,
        (FitVariant::TheilSen, _) => estimators::theil_sen(&d)?,
        (FitVariant::TheilSenHalf, _) => estimators::theil_sen_half(&d)?,
        (v, Some(plan)) => {
            let theta = resolve_theta(&plan, &a.privacy, a.p, &d, stderr)?;
            let params = PrivateParams::new(plan.epsilon, plan.range, theta)?;
            match v {
                FitVariant::Ts => estimators::dp_theil_sen(&d, &params, &mut rng)?,
                FitVariant::Half => estimators::dp_theil_sen_k_half(&d, &params, 1, &mut rng)?,
                _ => estimators::dp_theil_sen_k_half(&d, &params, k.expect("checked"), &mut rng)?,
            }
        }
        (_, None) => unreachable!("private variants carry a plan"),
    };

    open_output(&a.output, stdout, |w| match a.output.format {
        Format::Json => write_json(
            w,
            &FitOutput {
                schema_version: SCHEMA_VERSION,
                command: "fit",
                seed: a.seed,
                result: &result,
            },
        ),
        f => {
            let m = &result.meta;
            let row = FitRow {
                schema_version: SCHEMA_VERSION,
                variant: result.variant.name(),
                beta: result.beta,
                alpha: result.alpha,
                epsilon: m.epsilon,
                eps_mech: m.eps_mech,
                range: m.range,
                theta: m.theta,
                k: m.k,
                n: m.n,
                n_slopes: m.n_slopes,
                seed: a.seed,
            };
            write_table(w, &[row], f)
        }
    })
}

#[derive(Serialize)]
struct CiOutput<'a> {
    schema_version: u32,
    command: &'static str,
    seed: u64,
    #[serde(flatten)]
    interval: &'a ConfidenceInterval,
}

#[derive(Serialize)]
struct CiRow {
    schema_version: u32,
    variant: &'static str,
    lower: f64,
    upper: f64,
    nominal_coverage: f64,
    epsilon: f64,
    eps_call: f64,
    p: f64,
    range: f64,
    theta: f64,
    k: Option<usize>,
    b: f64,
    t: f64,
    n: usize,
    n_slopes: usize,
    lower_q: f64,
    upper_q: f64,
    asymptotic: bool,
    swapped: bool,
    seed: u64,
}

pub fn cmd_ci(a: &CiArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    check_p(a.p)?;
    let k = check_k(a.k, a.variant == CiVariantArg::Khalf)?;
    let plan = plan_privacy(&a.privacy)?;
    let variant = match a.variant {
        CiVariantArg::Ts => CiVariant::Full,
        CiVariantArg::Half => CiVariant::Half,
        CiVariantArg::Khalf => CiVariant::KHalf { k: k.expect("checked") },
    };

    let d = read_dataset(&a.input.input, &a.input.x_col, &a.input.y_col)?;
    let theta = resolve_theta(&plan, &a.privacy, a.p, &d, stderr)?;
    let params = CiParams::new(plan.epsilon, a.p, plan.range, theta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let ci = dp_theil_sen_ci(&d, &params, variant, &mut rng).map_err(|e| match e {
        Error::QuantileOutOfRange { .. } => CliError::Algorithm(format!(
            "{e}; the precondition 0 < 1/2 - b - t < 1/2 + b + t < 1 fails. \
             Increase n, epsilon or p, or use another variant"
        )),
        e => e.into(),
    })?;

    open_output(&a.output, stdout, |w| match a.output.format {
        Format::Json => write_json(
            w,
            &CiOutput {
                schema_version: SCHEMA_VERSION,
                command: "ci",
                seed: a.seed,
                interval: &ci,
            },
        ),
        f => {
            let m = &ci.meta;
            let row = CiRow {
                schema_version: SCHEMA_VERSION,
                variant: ci.variant.name(),
                lower: ci.lower,
                upper: ci.upper,
                nominal_coverage: ci.nominal_coverage,
                epsilon: m.epsilon,
                eps_call: m.eps_call,
                p: m.p,
                range: m.range,
                theta: m.theta,
                k: m.k,
                b: m.b,
                t: m.t,
                n: m.n,
                n_slopes: m.n_slopes,
                lower_q: m.lower_q,
                upper_q: m.upper_q,
                asymptotic: m.asymptotic,
                swapped: m.swapped,
                seed: a.seed,
            };
            write_table(w, &[row], f)
        }
    })
}

#[derive(Serialize)]
struct BoundRow {
    schema_version: u32,
    estimator: &'static str,
    value: f64,
    ratio_to_ols: f64,
    tau: Option<f64>,
    asymptotic: bool,
    constraints_ok: bool,
    /// `name=pass|fail` entries joined by `;`.
    constraints: String,
}

#[derive(Serialize)]
struct BoundsOutput<'a> {
    schema_version: u32,
    command: &'static str,
    params: &'a BoundParams,
    rows: Vec<BoundsJsonRow<'a>>,
}

#[derive(Serialize)]
struct BoundsJsonRow<'a> {
    #[serde(flatten)]
    result: &'a BoundResult,
    ratio_to_ols: f64,
}

pub fn cmd_bounds(a: &BoundsArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let sigma_e = require(a.sigma_e, "--sigma-e")?;
    let sigma_x = require(a.sigma_x, "--sigma-x")?;
    let n = require(a.n, "--n")?;
    check_p(a.p)?;
    let mut params = BoundParams::new(sigma_e, sigma_x, n, a.p);
    params.epsilon = a.epsilon;
    params.range = a.range;
    params.k = a.k;
    params.abs_beta = a.abs_beta;
    params.r_u = a.r_u;
    params.tau_n = a.tau_n;
    params.theta = match a.theta {
        Some(ThetaArg::Value(t)) => Some(t),
        Some(ThetaArg::Auto) => Some(bounds::suggest_theta(&params)?.theta),
        None => None,
    };
    params.validate()?;

    let ols = bounds::convergence_bound(BoundEstimator::Ols, &params)?.value;
    // without --estimator, rows whose parameters were not supplied are skipped
    let explicit = !a.estimator.is_empty();
    let estimators = if explicit { a.estimator.clone() } else { BoundEstimator::ALL.to_vec() };
    let mut results = Vec::new();
    for e in estimators {
        match bounds::convergence_bound(e, &params) {
            Ok(r) => results.push(r),
            Err(Error::MissingParameter(_)) if !explicit => {}
            Err(Error::MissingParameter(name)) => {
                return Err(usage(format!("{} needs --{}", e.name(), name.replace('_', "-"))))
            }
            Err(err) => return Err(err.into()),
        }
    }

    open_output(&a.output, stdout, |w| match a.output.format {
        Format::Json => write_json(
            w,
            &BoundsOutput {
                schema_version: SCHEMA_VERSION,
                command: "bounds",
                params: &params,
                rows: results
                    .iter()
                    .map(|r| BoundsJsonRow {
                        result: r,
                        ratio_to_ols: r.value / ols,
                    })
                    .collect(),
            },
        ),
        f => {
            let rows: Vec<BoundRow> = results
                .iter()
                .map(|r| BoundRow {
                    schema_version: SCHEMA_VERSION,
                    estimator: r.estimator.name(),
                    value: r.value,
                    ratio_to_ols: r.value / ols,
                    tau: r.tau,
                    asymptotic: r.asymptotic,
                    constraints_ok: r.constraints_ok(),
                    constraints: r
                        .constraints
                        .iter()
                        .map(|c| format!("{}={}", c.name, if c.satisfied { "pass" } else { "fail" }))
                        .collect::<Vec<_>>()
                        .join(";"),
                })
                .collect();
            write_table(w, &rows, f)
        }
    })
}

#[derive(Serialize)]
struct ThetaOutput<'a> {
    schema_version: u32,
    command: &'static str,
    #[serde(flatten)]
    suggestion: &'a ThetaSuggestion,
}

pub fn cmd_suggest_theta(a: &SuggestThetaArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let sigma_e = require(a.sigma_e, "--sigma-e")?;
    let sigma_x = require(a.sigma_x, "--sigma-x")?;
    let n = require(a.n, "--n")?;
    let mut params = BoundParams::new(sigma_e, sigma_x, n, check_p(a.p)?);
    params.epsilon = Some(require(a.epsilon, "--epsilon")?);
    params.range = Some(require(a.range, "--range")?);
    params.tau_n = a.tau_n;
    let s = bounds::suggest_theta(&params)?;
    let out = ThetaOutput {
        schema_version: SCHEMA_VERSION,
        command: "suggest-theta",
        suggestion: &s,
    };
    open_output(&a.output, stdout, |w| match a.output.format {
        Format::Json => write_json(w, &out),
        f => write_table(w, &[out], f),
    })
}

/// Builds one `SimConfig` per `--n` value from the grid flags.
pub fn simulation_configs(a: &SimulateArgs) -> CliResult<Vec<SimConfig>> {
    if let Some(path) = &a.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        let config: SimConfig = serde_json::from_str(&text)
            .map_err(|e| usage(format!("invalid config {}: {e}", path.display())))?;
        config.validate()?;
        return Ok(vec![config]);
    }
    if a.estimators.is_empty() && a.intervals.is_empty() {
        return Err(usage("empty grid: pass --estimators and/or --intervals"));
    }
    if a.n.is_empty() {
        return Err(usage("empty grid: --n has no values"));
    }
    let range = check_positive(a.range, "--range")?;
    for &e in &a.epsilon {
        check_positive(e, "--epsilon")?;
    }
    for &p in &a.p {
        check_p(p)?;
    }
    if a.k.contains(&0) {
        return Err(usage("--k must be at least 1"));
    }
    let design = match a.design {
        DesignArg::EquallySpaced => XDesign::EquallySpaced { lo: a.x_lo, hi: a.x_hi },
        DesignArg::TwoPoint => XDesign::TwoPoint { lo: a.x_lo, hi: a.x_hi },
    };

    let mut configs = Vec::new();
    for &n in &a.n {
        let mut c = SimConfig::new(n, a.beta, a.sigma_e, a.trials, a.seed);
        c.alpha = a.alpha;
        c.x_design = design.clone();
        if !a.p.is_empty() {
            c.report_ps = a.p.clone();
        }
        let sigma_x = c.sigma_x()?;
        let theta_for = |eps: f64, p: f64| -> CliResult<f64> {
            match a.theta {
                ThetaArg::Value(t) => Ok(t),
                ThetaArg::Auto => {
                    let mut bp = BoundParams::new(a.sigma_e, sigma_x, n, p).with_privacy(eps, range, 1.0);
                    bp.tau_n = a.tau_n;
                    Ok(bounds::suggest_theta(&bp)?.theta)
                }
            }
        };
        let p0 = a.p.first().copied().unwrap_or(0.1);
        for &v in &a.estimators {
            if !v.is_private() {
                let variant = match v {
                    FitVariant::Ols => Variant::Ols,
                    FitVariant::TheilSen => Variant::TheilSen,
                    _ => Variant::TheilSenHalf,
                };
                c.estimators.push(EstimatorSpec::non_private(variant));
                continue;
            }
            for &eps in &a.epsilon {
                let params = PrivateParams::new(eps, range, theta_for(eps, p0)?)?;
                match v {
                    FitVariant::Ts => c.estimators.push(EstimatorSpec::private(Variant::DpTheilSen, params, None)),
                    FitVariant::Half => {
                        c.estimators.push(EstimatorSpec::private(Variant::DpTheilSenKHalf, params, Some(1)))
                    }
                    _ => {
                        for &k in &a.k {
                            c.estimators.push(EstimatorSpec::private(Variant::DpTheilSenKHalf, params, Some(k)));
                        }
                    }
                }
            }
        }
        for &v in &a.intervals {
            for &eps in &a.epsilon {
                for &p in &a.p {
                    let params = CiParams::new(eps, p, range, theta_for(eps, p)?)?;
                    let variants: Vec<CiVariant> = match v {
                        CiVariantArg::Ts => vec![CiVariant::Full],
                        CiVariantArg::Half => vec![CiVariant::Half],
                        CiVariantArg::Khalf => a.k.iter().map(|&k| CiVariant::KHalf { k }).collect(),
                    };
                    for variant in variants {
                        c.intervals.push(IntervalSpec { variant, params });
                    }
                }
            }
        }
        c.validate()?;
        configs.push(c);
    }
    Ok(configs)
}

pub fn cmd_simulate(a: &SimulateArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let configs = simulation_configs(a)?;

    if let Some(path) = &a.dataset_out {
        let c = &configs[0];
        let d = sim::generate_dataset(c, &mut sim::substream(c.seed, 0, 0))?;
        let file = File::create(path)
            .map_err(|e| usage(format!("cannot create {}: {e}", path.display())))?;
        let mut wtr = csv::Writer::from_writer(file);
        for p in d.points() {
            wtr.serialize(p).map_err(|e| CliError::Data(format!("write failed: {e}")))?;
        }
        wtr.flush().map_err(io_err)?;
    }

    let mut rows = Vec::new();
    for c in &configs {
        let report = sim::run_trials(c)?;
        let _ = writeln!(
            stderr,
            "n={} trials={} estimators={} intervals={} wall={:.2?}",
            c.n,
            c.trials,
            c.estimators.len(),
            c.intervals.len(),
            report.wall_time
        );
        for e in &report.estimators {
            if e.failures > 0 {
                let _ = writeln!(
                    stderr,
                    "  {}: {} failed trials ({})",
                    e.label,
                    e.failures,
                    e.first_failure.as_deref().unwrap_or("")
                );
            }
        }
        for i in &report.intervals {
            if i.failures > 0 {
                let _ = writeln!(
                    stderr,
                    "  {}: {} failed trials ({})",
                    i.label,
                    i.failures,
                    i.first_failure.as_deref().unwrap_or("")
                );
            }
        }
        rows.extend(report.rows());
    }

    open_output(&a.output, stdout, |w| {
        match a.output.format {
            Format::Json => sim::write_jsonl(&rows, w),
            Format::Csv => sim::write_delimited(&rows, b',', w),
            Format::Tsv => sim::write_delimited(&rows, b'\t', w),
        }
        .map_err(CliError::from)
    })
}
