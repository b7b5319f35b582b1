//! `ckls` command-line front end.
//!
//! Reports go out as JSON, bulk grids and paths as CSV. Exit codes:
//!
//! ```text
//! 0  success
//! 1  parameter validation failed
//! 2  numerical failure
//! 3  usage or config error
//! ```

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ckls_core::analytic::{self, LawTag};
use ckls_core::feller::{self, DiffusionSpec, Endpoint, Quantity};
use ckls_core::girsanov;
use ckls_core::params::{self, parse_config};
use ckls_core::simulate::{self, Path};
use ckls_core::stats::Accumulator;
use ckls_core::{CklsParams, Error};

const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(name = "ckls", version, about = "CKLS short-rate model toolkit")]
struct Cli {
    /// Parameter file of `key = value` lines (a, b, sigma, k, lambda0, L).
    /// Without it the reference point a=0.2, b=0.5, sigma=0.3, k=0.75,
    /// lambda0=1, L=2 is used.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,

    /// Output file. CSV-producing commands write their table here and the
    /// JSON summary to stdout; JSON-only commands write the report here.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the parameters and print the derived square-root and OU parameters.
    Validate,
    /// Evaluate the power transform and its ODE residual at one point.
    Transform {
        #[arg(long, allow_negative_numbers = true)]
        x: f64,
    },
    /// Simulate paths and write them as `path_id,t,value`.
    Simulate {
        #[arg(long, value_enum, default_value_t = MeasureArg::P)]
        measure: MeasureArg,
        #[arg(long, value_enum, default_value_t = SchemeArg::Em)]
        scheme: SchemeArg,
        #[arg(long, default_value_t = 10)]
        paths: usize,
        #[arg(long = "t-max", default_value_t = 1.0)]
        t_max: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
    },
    /// Tabulate a closed-form density as `x,density`.
    Density {
        /// One of cir_transition, cir_stationary, ckls_stationary_P,
        /// lambda_stationary_Q, lambda_transition_Q, v_transition_Q.
        #[arg(long)]
        which: String,
        #[arg(long)]
        t: Option<f64>,
        /// `lo:hi:n`, n equally spaced points.
        #[arg(long)]
        grid: String,
    },
    /// Closed-form moments at horizon `t`.
    Moments {
        #[arg(long)]
        t: f64,
    },
    /// Monte-Carlo check of the stochastic exponential, or the Novikov
    /// counterexample with `--counterexample`.
    Girsanov {
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        #[arg(long = "t-max", default_value_t = 1.0)]
        t_max: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long)]
        counterexample: bool,
        /// Tail threshold for the counterexample.
        #[arg(long, default_value_t = 1.0)]
        c: f64,
    },
    /// Boundary behaviour of the transformed-measure short rate.
    Feller {
        #[arg(long, value_enum)]
        which: FellerWhich,
        /// Evaluate at a single interior point.
        #[arg(long, conflicts_with = "endpoint", allow_negative_numbers = true)]
        x: Option<f64>,
        /// Probe the limit at an endpoint.
        #[arg(long, value_enum)]
        endpoint: Option<EndpointArg>,
        /// Reference point of the scale function.
        #[arg(long, default_value_t = 1.0)]
        anchor: f64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MeasureArg {
    #[value(name = "P", alias = "p")]
    P,
    #[value(name = "Q", alias = "q")]
    Q,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SchemeArg {
    Em,
    Exact,
    Besq,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FellerWhich {
    Psi,
    Phi,
    Classify,
    Verdict,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EndpointArg {
    Lo,
    Hi,
}

impl From<EndpointArg> for Endpoint {
    fn from(e: EndpointArg) -> Self {
        match e {
            EndpointArg::Lo => Endpoint::Lo,
            EndpointArg::Hi => Endpoint::Hi,
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 3,
            CliError::Core(e) if e.is_validation() => 1,
            CliError::Core(Error::Config(_) | Error::InvalidArgument(_)) => 3,
            CliError::Core(_) => 2,
            CliError::Io { .. } => 3,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn io_err(path: &FsPath) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn load_params(config: Option<&FsPath>) -> CliResult<CklsParams> {
    match config {
        None => Ok(CklsParams::reference()),
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            Ok(params::validate(parse_config(&text)?)?)
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    let p = load_params(cli.config.as_deref())?;
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Validate => emit_json(out, &validate_report(&p)),
        Command::Transform { x } => emit_json(out, &transform_report(&p, *x)?),
        Command::Simulate { measure, scheme, paths, t_max, dt } => {
            let paths = simulate_paths(&p, *measure, *scheme, *paths, *t_max, *dt, cli.seed)?;
            write_csv(out, "path_id,t,value", |w| {
                for (id, path) in paths.iter().enumerate() {
                    for (t, v) in path.times.iter().zip(&path.values) {
                        writeln!(w, "{id},{t:.16e},{v:.16e}")?;
                    }
                }
                Ok(())
            })?;
            emit_summary(out, &simulation_summary(&paths, *t_max, cli.seed))
        }
        Command::Density { which, t, grid } => {
            let law: LawTag = which.parse()?;
            let grid = analytic::parse_grid(grid)?;
            let curve = analytic::density_curve(law, *t, &grid, &p)?;
            write_csv(out, "x,density", |w| {
                for (x, d) in curve.grid.iter().zip(&curve.values) {
                    writeln!(w, "{x:.16e},{d:.16e}")?;
                }
                Ok(())
            })?;
            emit_summary(out, &DensitySummary { law, t: *t, points: grid.len(), trapezoid_mass: curve.mass })
        }
        Command::Moments { t } => emit_json(out, &moments_report(&p, *t)?),
        Command::Girsanov { paths, t_max, dt, counterexample, c } => {
            if *counterexample {
                emit_json(out, &girsanov::novikov_counterexample(*c, *paths, cli.seed)?)
            } else {
                emit_json(out, &girsanov::martingale_estimate(&p, *t_max, *dt, *paths, cli.seed)?)
            }
        }
        Command::Feller { which, x, endpoint, anchor } => feller_command(out, &p, *which, *x, *endpoint, *anchor),
    }
}

// ---------------------------------------------------------------------------
// Output

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    serde_json::to_string_pretty(value).map_err(|e| CliError::Usage(format!("cannot serialise report: {e}")))
}

/// JSON report to `--out` if given, else stdout.
fn emit_json<T: Serialize>(out: Option<&FsPath>, value: &T) -> CliResult<()> {
    let text = to_json(value)?;
    match out {
        Some(path) => fs::write(path, text + "\n").map_err(io_err(path)),
        None => print_to(io::stdout().lock(), &text),
    }
}

fn print_to(mut w: impl Write, text: &str) -> CliResult<()> {
    writeln!(w, "{text}").map_err(io_err(FsPath::new("<stdout>")))
}

/// Summary of a CSV run: stdout when the table went to a file, stderr
/// when the table itself is on stdout.
fn emit_summary<T: Serialize>(out: Option<&FsPath>, value: &T) -> CliResult<()> {
    let text = to_json(value)?;
    if out.is_some() {
        print_to(io::stdout().lock(), &text)
    } else {
        print_to(io::stderr().lock(), &text)
    }
}

fn write_csv<F>(out: Option<&FsPath>, header: &str, body: F) -> CliResult<()>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    let write_all = |w: &mut dyn Write| -> io::Result<()> {
        writeln!(w, "{header}")?;
        body(w)?;
        w.flush()
    };
    match out {
        Some(path) => {
            let file = fs::File::create(path).map_err(io_err(path))?;
            write_all(&mut BufWriter::new(file)).map_err(io_err(path))
        }
        None => {
            let stdout = io::stdout();
            write_all(&mut BufWriter::new(stdout.lock())).map_err(io_err(FsPath::new("<stdout>")))
        }
    }
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Serialize)]
struct ValidateReport {
    params: CklsParams,
    cir: params::CirParams,
    ou: params::OuParams,
    feller_ratio: f64,
    aux: params::AuxConstants,
}

fn validate_report(p: &CklsParams) -> ValidateReport {
    let cir = p.cir();
    ValidateReport { params: *p, cir, ou: p.ou(), feller_ratio: params::feller_ratio(&cir), aux: p.aux() }
}

#[derive(Serialize)]
struct TransformReport {
    x: f64,
    forward: f64,
    inverse: f64,
    d1: f64,
    d2: f64,
    residual: f64,
}

fn transform_report(p: &CklsParams, x: f64) -> CliResult<TransformReport> {
    let tr = p.transform();
    Ok(TransformReport {
        x,
        forward: tr.forward(x)?,
        inverse: tr.inverse(x)?,
        d1: tr.d1(x)?,
        d2: tr.d2(x)?,
        residual: tr.ode_residual(x)?,
    })
}

fn simulate_paths(
    p: &CklsParams,
    measure: MeasureArg,
    scheme: SchemeArg,
    n_paths: usize,
    t_max: f64,
    dt: f64,
    seed: u64,
) -> CliResult<Vec<Path>> {
    if n_paths == 0 {
        return Err(CliError::Usage("--paths must be at least 1".into()));
    }
    let (n, h) = simulate::uniform_grid(t_max, dt)?;
    let grid: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
    let c = p.cir();
    let one = |rng: &mut simulate::RngStream| -> ckls_core::Result<Path> {
        match (measure, scheme) {
            (MeasureArg::P, SchemeArg::Em) => simulate::em_ckls_p(p, t_max, dt, rng),
            (MeasureArg::Q, SchemeArg::Em) => simulate::em_lambda_q(p, t_max, dt, rng),
            (MeasureArg::Q, SchemeArg::Exact) => simulate::exact_lambda_q(p, &grid, rng),
            (MeasureArg::Q, SchemeArg::Besq) => simulate::cir_via_besq(&c, t_max, n, rng),
            (MeasureArg::P, _) => unreachable!("rejected before simulation"),
        }
    };
    if matches!(measure, MeasureArg::P) && !matches!(scheme, SchemeArg::Em) {
        return Err(CliError::Usage("only --scheme em is available under --measure P".into()));
    }
    Ok(simulate::ensemble(n_paths, seed, one).into_iter().collect::<ckls_core::Result<_>>()?)
}

#[derive(Serialize)]
struct SimulationSummary {
    measure: simulate::Measure,
    scheme: simulate::Scheme,
    seed: u64,
    n_paths: usize,
    t_max: f64,
    dt: f64,
    terminal_mean: f64,
    terminal_std_err: f64,
    truncated_steps: usize,
    censored_paths: usize,
}

fn simulation_summary(paths: &[Path], t_max: f64, seed: u64) -> SimulationSummary {
    let first = &paths[0];
    let terminal: Accumulator = paths.iter().map(Path::terminal).collect();
    SimulationSummary {
        measure: first.measure,
        scheme: first.scheme,
        seed,
        n_paths: paths.len(),
        t_max,
        dt: first.times.get(1).copied().unwrap_or(t_max),
        terminal_mean: terminal.mean(),
        terminal_std_err: if paths.len() > 1 { terminal.std_err() } else { f64::NAN },
        truncated_steps: paths.iter().map(|p| p.truncated_steps).sum(),
        censored_paths: paths.iter().filter(|p| p.censored_from.is_some()).count(),
    }
}

#[derive(Serialize)]
struct DensitySummary {
    law: LawTag,
    t: Option<f64>,
    points: usize,
    trapezoid_mass: f64,
}

#[derive(Serialize)]
struct RawMoment {
    n: u32,
    value: f64,
}

#[derive(Serialize)]
struct LinearApprox {
    mean: f64,
    var: f64,
}

#[derive(Serialize)]
struct MomentsReport {
    t: f64,
    cir: analytic::CirMoments,
    cir_raw_moments: Vec<RawMoment>,
    s: analytic::SMoments,
    lambda_linear: LinearApprox,
    martingale_deficit: f64,
}

fn moments_report(p: &CklsParams, t: f64) -> CliResult<MomentsReport> {
    let c = p.cir();
    let cir_raw_moments = (1..=4)
        .map(|n| Ok(RawMoment { n, value: analytic::cir_moment_n(n, t, &c)? }))
        .collect::<ckls_core::Result<_>>()?;
    let (mean, var) = analytic::lambda_linear_approx(t, p)?;
    Ok(MomentsReport {
        t,
        cir: analytic::cir_mean_var_cov(t, t, &c)?,
        cir_raw_moments,
        s: analytic::s_moments(t, t, p)?,
        lambda_linear: LinearApprox { mean, var },
        martingale_deficit: girsanov::martingale_deficit(p, t)?,
    })
}

#[derive(Serialize)]
struct PointReport {
    x: f64,
    quantity: &'static str,
    value: f64,
    /// Closed-form series value, for `psi` with the default anchor.
    #[serde(skip_serializing_if = "Option::is_none")]
    series: Option<f64>,
}

#[derive(Serialize)]
struct LimitReport {
    endpoint: Endpoint,
    quantity: &'static str,
    limit: feller::Limit,
    evidence: Vec<feller::Probe>,
}

fn feller_command(
    out: Option<&FsPath>,
    p: &CklsParams,
    which: FellerWhich,
    x: Option<f64>,
    endpoint: Option<EndpointArg>,
    anchor: f64,
) -> CliResult<()> {
    let spec = DiffusionSpec::ckls_auxiliary(p).with_anchor(anchor)?;
    let (quantity, name) = match which {
        FellerWhich::Verdict => {
            return emit_json(out, &feller::martingale_verdict_with_anchor(p, anchor)?);
        }
        FellerWhich::Classify => {
            let ends = match endpoint {
                Some(e) => vec![e.into()],
                None => Endpoint::BOTH.to_vec(),
            };
            let reports = ends
                .into_iter()
                .map(|e| feller::boundary_classify(e, &spec))
                .collect::<ckls_core::Result<Vec<_>>>()?;
            return emit_json(out, &reports);
        }
        FellerWhich::Psi => (Quantity::Psi, "psi"),
        FellerWhich::Phi => (Quantity::Phi, "phi"),
    };
    if let Some(x) = x {
        let (value, series) = match quantity {
            Quantity::Psi if anchor == 1.0 => (feller::scale_psi(x, &spec)?, Some(feller::psi_series(x, p)?)),
            Quantity::Psi => (feller::scale_psi(x, &spec)?, None),
            _ => (feller::phi_fine(x, &spec)?, None),
        };
        return emit_json(out, &PointReport { x, quantity: name, value, series });
    }
    let end: Endpoint = endpoint.unwrap_or(EndpointArg::Lo).into();
    let (limit, evidence) = feller::probe_limit(&spec, end, quantity)?;
    emit_json(out, &LimitReport { endpoint: end, quantity: name, limit, evidence })
}
