//! Command-line surface: `classify`, `solve`, `ensemble` and `example`.

mod output;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

pub use output::{fmt_f64, trajectory_header, write_json, write_rows_csv, write_trajectory_csv, RunManifest};

use crate::error::SdaeError;
use crate::examples::{lookup, sphere_h_jet, ProblemEntry};
use crate::geometry::stereographic;
use crate::problem::{classify, SDAEProblem};
use crate::solver::{run_ensemble, Algorithm, ClosedFormU, EpsilonCheck, RetryRng, SolverConfig};
use crate::Vector;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_STIFFNESS: i32 = 3;
pub const EXIT_FALLBACK: i32 = 4;
pub const EXIT_NUMERIC: i32 = 5;

/// Paths per set in the figure data of `example`.
pub const FIGURE_PATHS: usize = 8;
/// Rays from the chart origin used to trace `{h = 0}`.
pub const CURVE_RAYS: usize = 720;
/// Outer radius of the bisection bracket along each ray.
const CURVE_RADIUS: f64 = 3.0;
const CURVE_TOL: f64 = 1e-8;

/// Process exit code for a solver or problem error.
pub fn exit_code(e: &SdaeError) -> i32 {
    match e {
        SdaeError::Stiffness { .. } => EXIT_STIFFNESS,
        SdaeError::FallbackFailure { .. } | SdaeError::NonConvergence { .. } | SdaeError::LocalMinimum { .. } => {
            EXIT_FALLBACK
        }
        SdaeError::InvalidConfig(_)
        | SdaeError::SchemeMismatch(_)
        | SdaeError::Precondition(_)
        | SdaeError::Dimension { .. }
        | SdaeError::MissingConnection(_)
        | SdaeError::UnsupportedMetric(_) => EXIT_USAGE,
        _ => EXIT_NUMERIC,
    }
}

#[derive(Debug, Parser)]
#[command(name = "sdae", version, about = "Stochastic differential-algebraic equations on embedded manifolds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify the index of a problem and test it for ill-posedness.
    Classify(ClassifyArgs),
    /// Solve individual paths and write one CSV per path.
    Solve(RunArgs),
    /// Run an ensemble and write constraint diagnostics.
    Ensemble(RunArgs),
    /// Write figure data: constrained and unconstrained paths and the constraint curve.
    Example(ExampleArgs),
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long, default_value = "sphere_example")]
    pub problem: String,
    #[arg(long, default_value_t = 64)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the report as JSON to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AlgorithmArg {
    Index1,
    Alg1,
    Alg2,
    ClosedForm,
    Unconstrained,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Index1 => Algorithm::Index1,
            AlgorithmArg::Alg1 => Algorithm::Alg1,
            AlgorithmArg::Alg2 => Algorithm::Alg2,
            AlgorithmArg::ClosedForm => Algorithm::ClosedForm,
            AlgorithmArg::Unconstrained => Algorithm::Unconstrained,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CheckArg {
    EveryStep,
    BlockEnd,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RetryArg {
    Reuse,
    Fresh,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Registered problem name (overrides a manifest's problem).
    #[arg(long)]
    pub problem: Option<String>,
    #[arg(long, value_enum)]
    pub algorithm: Option<AlgorithmArg>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub t_final: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub b0: Option<f64>,
    #[arg(long)]
    pub b_cap: Option<f64>,
    #[arg(long)]
    pub inner_steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long, value_enum)]
    pub retry_rng: Option<RetryArg>,
    #[arg(long, value_enum)]
    pub epsilon_check: Option<CheckArg>,
    /// Include a Monte-Carlo estimate of lambda in ensemble diagnostics.
    #[arg(long)]
    pub lambda_estimate: bool,
    /// JSON file with flat SolverConfig keys, or a run manifest.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExampleArgs {
    /// Registered problem name.
    #[arg(default_value = "sphere_example")]
    pub name: String,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value = "figure")]
    pub out: PathBuf,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<SdaeError> for CliError {
    fn from(e: SdaeError) -> Self {
        CliError { code: exit_code(&e), message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError { code: EXIT_IO, message: e.to_string() }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError { code: EXIT_USAGE, message: msg.into() }
}

/// Resolve the problem name and solver configuration: defaults, then the
/// config file, then explicit flags.
pub fn resolve(args: &SolverArgs) -> Result<(String, SolverConfig), CliError> {
    let mut problem = None;
    let mut config = SolverConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        if value.get("config").is_some() {
            let m: RunManifest = serde_json::from_value(value).map_err(|e| usage(format!("manifest: {e}")))?;
            problem = Some(m.problem);
            config = m.config;
        } else {
            config = serde_json::from_value(value).map_err(|e| usage(format!("config: {e}")))?;
        }
    }
    if let Some(p) = &args.problem {
        problem = Some(p.clone());
    }
    macro_rules! set {
        ($($field:ident <- $arg:expr),* $(,)?) => {$( if let Some(v) = $arg { config.$field = v.into(); } )*};
    }
    set!(
        algorithm <- args.algorithm.map(Algorithm::from),
        dt <- args.dt,
        t_final <- args.t_final,
        epsilon <- args.epsilon,
        alpha <- args.alpha,
        b0 <- args.b0,
        b_cap <- args.b_cap,
        inner_steps <- args.inner_steps,
        seed <- args.seed,
        n_paths <- args.paths,
        retry_rng <- args.retry_rng.map(|r| match r {
            RetryArg::Reuse => RetryRng::Reuse,
            RetryArg::Fresh => RetryRng::Fresh,
        }),
        epsilon_check <- args.epsilon_check.map(|c| match c {
            CheckArg::EveryStep => EpsilonCheck::EveryStep,
            CheckArg::BlockEnd => EpsilonCheck::BlockEnd,
        }),
    );
    if args.lambda_estimate {
        config.lambda_estimate = true;
    }
    config.validate()?;
    Ok((problem.unwrap_or_else(|| "sphere_example".into()), config))
}

fn entry(name: &str) -> Result<&'static ProblemEntry, CliError> {
    lookup(name).map_err(|e| usage(e.to_string()))
}

fn closed_form_for(entry: &ProblemEntry) -> Option<ClosedFormU> {
    entry.closed_form.map(|f| f())
}

fn manifest(command: &str, problem: &str, config: &SolverConfig, outputs: Vec<String>, runtimes: Vec<f64>, total: f64) -> RunManifest {
    RunManifest {
        command: command.into(),
        problem: problem.into(),
        config: config.clone(),
        seed: config.seed,
        version: env!("CARGO_PKG_VERSION").into(),
        outputs,
        path_runtimes: runtimes,
        runtime_seconds: total,
    }
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn cmd_classify(args: &ClassifyArgs) -> Result<String, CliError> {
    let e = entry(&args.problem)?;
    let report = classify(&(e.build)(), args.samples, args.seed)?;
    let mut text = format!(
        "problem: {}\nkind: {:?}\nill_posed: {}\nwitnesses: {}\n",
        e.name,
        report.kind,
        report.ill_posed.label(),
        report.witnesses.len()
    );
    for (i, w) in report.witnesses.iter().take(5).enumerate() {
        text.push_str(&format!(
            "  [{i}] d2h_norm={:?} d2h_ratio={:?} diffusion_residuals={:?}\n",
            w.d2h_norm, w.d2h_ratio, w.diffusion_residuals
        ));
    }
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    Ok(text)
}

pub fn cmd_solve(args: &RunArgs) -> Result<String, CliError> {
    let (name, config) = resolve(&args.solver)?;
    let e = entry(&name)?;
    let problem = (e.build)();
    let cf = closed_form_for(e);
    fs::create_dir_all(&args.out)?;
    let start = Instant::now();
    let run = run_ensemble(&problem, cf.as_ref(), &config).map_err(CliError::from)?;
    let mut outputs = vec![];
    let mut first_error = None;
    for (i, r) in run.trajectories.iter().enumerate() {
        match r {
            Ok(t) => {
                let path = args.out.join(format!("path_{i:03}.csv"));
                write_trajectory_csv(&path, t)?;
                outputs.push(file_name(&path));
            }
            Err(err) => {
                first_error.get_or_insert_with(|| err.clone());
            }
        }
    }
    write_json(
        &args.out.join("manifest.json"),
        &manifest("solve", &name, &config, outputs.clone(), run.runtimes, start.elapsed().as_secs_f64()),
    )?;
    if let Some(err) = first_error {
        return Err(err.into());
    }
    Ok(format!("wrote {} trajectories to {}\n", outputs.len(), args.out.display()))
}

pub fn cmd_ensemble(args: &RunArgs) -> Result<String, CliError> {
    let (name, config) = resolve(&args.solver)?;
    let e = entry(&name)?;
    let problem = (e.build)();
    let cf = closed_form_for(e);
    fs::create_dir_all(&args.out)?;
    let start = Instant::now();
    let run = run_ensemble(&problem, cf.as_ref(), &config)?;
    let diag_path = args.out.join("diagnostics.json");
    write_json(&diag_path, &run.diagnostics)?;
    write_json(
        &args.out.join("manifest.json"),
        &manifest("ensemble", &name, &config, vec![file_name(&diag_path)], run.runtimes, start.elapsed().as_secs_f64()),
    )?;
    let d = &run.diagnostics;
    Ok(format!(
        "paths: {}\nfailed: {}\nviolation_fraction: {}\nlambda_estimate: {:?}\n",
        d.n_paths, d.n_failed, d.violation_fraction, d.lambda_estimate
    ))
}

/// Points of `{h = 0}` on the sphere example by bisection along rays of the
/// north stereographic plane. Rows: `theta, X, Y, x1, x2, x3, h`.
pub fn constraint_curve(rays: usize) -> Result<Vec<Vec<f64>>, SdaeError> {
    let chart = stereographic(1.0);
    let h = |r: f64, th: f64| -> Result<(f64, Vector, Vector), SdaeError> {
        let c = Vector::from_vec(vec![r * th.cos(), r * th.sin()]);
        let x = chart.from_coords(&c);
        Ok((sphere_h_jet(&x)?.value[0], c, x))
    };
    let mut rows = vec![];
    for k in 0..rays {
        let th = 2.0 * std::f64::consts::PI * k as f64 / rays as f64;
        let (mut lo, mut hi) = (1e-6, CURVE_RADIUS);
        let (h_lo, _, _) = h(lo, th)?;
        if h_lo <= 0.0 || h(hi, th)?.0 >= 0.0 {
            continue;
        }
        let mut best = h(0.5 * (lo + hi), th)?;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            best = h(mid, th)?;
            if best.0.abs() <= CURVE_TOL * 1e-3 || hi - lo < 1e-15 {
                break;
            }
            if best.0 > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (hv, c, x) = best;
        if hv.abs() <= CURVE_TOL {
            rows.push(vec![th, c[0], c[1], x[0], x[1], x[2], hv]);
        }
    }
    Ok(rows)
}

pub fn cmd_example(args: &ExampleArgs) -> Result<String, CliError> {
    let mut solver = args.solver.clone();
    solver.problem.get_or_insert_with(|| args.name.clone());
    solver.paths.get_or_insert(FIGURE_PATHS);
    let (name, config) = resolve(&solver)?;
    let e = entry(&name)?;
    let problem: SDAEProblem = (e.build)();
    let cf = closed_form_for(e);
    fs::create_dir_all(&args.out)?;
    let start = Instant::now();
    let mut outputs = vec![];
    let mut runtimes = vec![];
    let free = SolverConfig { algorithm: Algorithm::Unconstrained, ..config.clone() };
    for (label, cfg) in [("constrained", &config), ("unconstrained", &free)] {
        let run = run_ensemble(&problem, cf.as_ref(), cfg)?;
        runtimes.extend(run.runtimes);
        for (i, r) in run.trajectories.iter().enumerate() {
            if let Ok(t) = r {
                let path = args.out.join(format!("{label}_{i:02}.csv"));
                write_trajectory_csv(&path, t)?;
                outputs.push(file_name(&path));
            }
        }
    }
    if name == "sphere_example" {
        let rows = constraint_curve(CURVE_RAYS)?;
        let path = args.out.join("constraint_curve.csv");
        write_rows_csv(&path, &["theta", "X", "Y", "x1", "x2", "x3", "h"], &rows)?;
        outputs.push(file_name(&path));
    }
    let n = outputs.len();
    write_json(
        &args.out.join("manifest.json"),
        &manifest("example", &name, &config, outputs, runtimes, start.elapsed().as_secs_f64()),
    )?;
    Ok(format!("wrote {n} files to {}\n", args.out.display()))
}

/// Parse `args` and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Classify(a) => cmd_classify(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Ensemble(a) => cmd_ensemble(a),
        Command::Example(a) => cmd_example(a),
    };
    match result {
        Ok(text) => {
            print!("{text}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
