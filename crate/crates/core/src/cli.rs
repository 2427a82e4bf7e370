//! The `flrt` command line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::design::{build_design, eig_qhat, eig_qraw, qraw_spectrum};
use crate::error::{FlrtError, Result};
use crate::estimator::fit;
use crate::glrt::{run_test_with, Sided, TracePath};
use crate::ingest::load_curves;
use crate::lambda_select::{select_lambda, select_lambda_from_spectrum};
use crate::report::{emit_report, emit_rows, AnalysisReport, Format};
use crate::simlab::{power_curve, run_monte_carlo, LambdaRule, SimConfig, Setup};

#[derive(Debug, Parser)]
#[command(name = "flrt", version, about = "Likelihood ratio test for a functional linear model")]
struct Cli {
    /// Worker threads (overrides FLRT_THREADS)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log verbosity (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Test H0: beta = 0 on a CSV data set
    Test(TestArgs),
    /// Monte Carlo size/power of the test
    Simulate(SimArgs),
    /// Power as a function of B, written as CSV and SVG
    PowerCurve(PowerArgs),
    /// Report the adaptive smoothing parameter for a CSV data set
    SelectLambda(DataArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Input CSV (columns t0..tq and y)
    #[arg(long = "in")]
    input: PathBuf,
    /// Penalty order
    #[arg(long, default_value_t = 2)]
    m: usize,
    /// Number of grid points on [0, 1]
    #[arg(long, default_value_t = 201)]
    grid: usize,
    /// Multiply every curve value and response by this factor
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Pair curve i with response i + lag
    #[arg(long, default_value_t = 0)]
    lag: usize,
    /// Output file (standard output if absent)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CalibArgs {
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// one or two
    #[arg(long, default_value = "two")]
    sided: String,
    /// Fixed smoothing parameter
    #[arg(long, conflicts_with = "adaptive")]
    lambda: Option<f64>,
    /// Select the smoothing parameter from the data (default)
    #[arg(long)]
    adaptive: bool,
}

#[derive(Debug, Args)]
struct TestArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    calib: CalibArgs,
    /// text or csv
    #[arg(long, default_value = "text")]
    format: String,
    /// eigen or dense
    #[arg(long, default_value = "eigen")]
    trace: String,
}

#[derive(Debug, Args)]
struct SimCommon {
    /// 1 or 2
    #[arg(long, default_value = "1")]
    setup: String,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = 201)]
    grid: usize,
    /// Read the setup-2 bracket literally instead of with a floor
    #[arg(long)]
    literal_bracket: bool,
    #[command(flatten)]
    calib: CalibArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimArgs {
    #[command(flatten)]
    common: SimCommon,
    /// Comma-separated decay exponents
    #[arg(long, default_value = "2", value_delimiter = ',')]
    nu: Vec<f64>,
    /// Comma-separated sample sizes
    #[arg(long, default_value = "100", value_delimiter = ',')]
    n: Vec<usize>,
    /// Slope magnitude
    #[arg(long = "B", default_value_t = 0.0)]
    b: f64,
    /// csv or table
    #[arg(long, default_value = "csv")]
    format: String,
}

#[derive(Debug, Args)]
struct PowerArgs {
    #[command(flatten)]
    common: SimCommon,
    #[arg(long, default_value = "1.1,1.5,2,4", value_delimiter = ',')]
    nu: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Comma-separated slope magnitudes
    #[arg(
        long = "B",
        default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1",
        value_delimiter = ','
    )]
    b: Vec<f64>,
    /// SVG plot path (defaults to the CSV path with an .svg extension)
    #[arg(long)]
    svg: Option<PathBuf>,
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(FlrtError::InvalidInput(format!("--alpha must lie in (0, 1), got {alpha}")))
    }
}

fn lambda_rule(c: &CalibArgs) -> Result<LambdaRule> {
    match c.lambda {
        Some(l) if l > 0.0 && l.is_finite() => Ok(LambdaRule::Fixed(l)),
        Some(l) => Err(FlrtError::InvalidInput(format!("--lambda must be positive, got {l}"))),
        None => Ok(LambdaRule::Adaptive),
    }
}

fn sim_template(c: &SimCommon) -> Result<SimConfig> {
    check_alpha(c.calib.alpha)?;
    Ok(SimConfig {
        setup: c.setup.parse::<Setup>()?,
        reps: c.reps,
        seed: c.seed,
        m: c.m,
        grid_points: c.grid,
        alpha: c.calib.alpha,
        sided: c.calib.sided.parse::<Sided>()?,
        lambda_rule: lambda_rule(&c.calib)?,
        literal_bracket: c.literal_bracket,
        ..SimConfig::default()
    })
}

fn cmd_test(a: &TestArgs) -> Result<()> {
    check_alpha(a.calib.alpha)?;
    let sided: Sided = a.calib.sided.parse()?;
    let trace: TracePath = a.trace.parse()?;
    let format: Format = a.format.parse()?;
    let rule = lambda_rule(&a.calib)?;
    let d = &a.data;
    let loaded = load_curves(&d.input, d.grid, d.scale, d.lag)?;
    let sample = &loaded.sample;
    let design = build_design(sample, d.m)?;
    let (lambda, selection) = match rule {
        LambdaRule::Fixed(l) => (l, None),
        LambdaRule::Adaptive => {
            let s = select_lambda_from_spectrum(&qraw_spectrum(&design), sample.n())?;
            (s.lambda_tilde, Some(s))
        }
    };
    let eigs = eig_qhat(&design)?;
    let spline = fit(&design, &eigs, sample.responses(), lambda)?;
    let test = run_test_with(&design, &eigs, sample.responses(), lambda, a.calib.alpha, sided, trace)?;
    let report = AnalysisReport {
        test,
        selection,
        m: d.m,
        n: sample.n(),
        grid: sample.grid().points().to_vec(),
        beta: spline.beta.values().to_vec(),
        upsilon1: spline.upsilon1,
        provenance: loaded.provenance,
    };
    write_output(d.out.as_deref(), &emit_report(&report, format)?)
}

fn cmd_select_lambda(d: &DataArgs) -> Result<()> {
    let loaded = load_curves(&d.input, d.grid, d.scale, d.lag)?;
    let design = build_design(&loaded.sample, d.m)?;
    let raw = eig_qraw(&design)?;
    let s = select_lambda(&raw, loaded.sample.n())?;
    let text = format!(
        "lambda.lambda_tilde = {:.16e}\nlambda.objective_value = {:.16e}\n\
         lambda.stationarity_residual = {:.16e}\nlambda.grid_lo = {:.16e}\n\
         lambda.grid_hi = {:.16e}\nlambda.at_boundary = {}\nlambda.rank = {}\nfit.n = {}\n",
        s.lambda_tilde,
        s.objective_value,
        s.stationarity_residual,
        s.grid_lo,
        s.grid_hi,
        s.at_boundary,
        raw.rank(),
        loaded.sample.n()
    );
    write_output(d.out.as_deref(), text.as_bytes())
}

fn cmd_simulate(a: &SimArgs) -> Result<()> {
    let template = sim_template(&a.common)?;
    let format: Format = a.format.parse()?;
    if format == Format::Svg {
        return Err(FlrtError::UnsupportedFormat {
            format: format.to_string(),
            what: "simulate (use power-curve)".into(),
        });
    }
    let mut rows = Vec::new();
    for &nu in &a.nu {
        for &n in &a.n {
            let config = SimConfig {
                nu,
                n,
                b: a.b,
                ..template.clone()
            };
            rows.push(run_monte_carlo(&config)?);
        }
    }
    write_output(a.common.out.as_deref(), &emit_rows(&rows, format)?)
}

fn cmd_power_curve(a: &PowerArgs) -> Result<()> {
    let template = SimConfig {
        n: a.n,
        ..sim_template(&a.common)?
    };
    let mut rows = Vec::new();
    for &nu in &a.nu {
        let t = SimConfig {
            nu,
            ..template.clone()
        };
        rows.extend(power_curve(&t, &a.b)?);
    }
    let out = a.common.out.as_deref();
    write_output(out, &emit_rows(&rows, Format::Csv)?)?;
    let svg_path = a
        .svg
        .clone()
        .or_else(|| out.map(|p| p.with_extension("svg")));
    if let Some(p) = svg_path {
        fs::write(p, emit_rows(&rows, Format::Svg)?)?;
    }
    Ok(())
}

fn configure_threads(flag: Option<usize>) -> Result<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("FLRT_THREADS") {
            Ok(v) => Some(v.trim().parse().map_err(|_| {
                FlrtError::InvalidInput(format!("FLRT_THREADS must be a positive integer, got `{v}`"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(FlrtError::InvalidInput("thread count must be positive".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::debug!("thread pool already configured: {e}");
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads(cli.threads)?;
    match &cli.command {
        Command::Test(a) => cmd_test(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::PowerCurve(a) => cmd_power_curve(a),
        Command::SelectLambda(a) => cmd_select_lambda(a),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("flrt: {e}");
            e.exit_code()
        }
    }
}
