//! Command-line front end: one binary with subcommands for a single
//! optimization run, the synthetic benchmark sweep, the robust-PCA
//! recovery table, the phase-retrieval success curve, and the randomized
//! property suite. Configuration layers as defaults < `--config` file <
//! flags; every random decision derives from one master seed, so identical
//! invocations produce byte-identical outputs.
//!
//! Exit codes: 0 success, 1 runtime (solver) failure, 2 configuration
//! error, 3 I/O failure.

mod config;
mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sphere_cbo::dynamics::{run_with_options, InitMode, RunOptions, RunReport};
use sphere_cbo::error::CboError;
use sphere_cbo::experiments::{
    benchmark_sweep, phase_retrieval_curve, property_suite, robust_pca_experiment, SweepSpec,
};
use sphere_cbo::objectives::{
    load_pointcloud_csv, pca_energy, rotated_minimizer, BenchmarkFn, XsyMode,
};

use crate::config::{effective_solver, gkv_from_flags, EffectiveConfig, SolverArgs};
use crate::output::{emit, emit_if_requested, json_document, pca_csv, pr_csv, sweep_csv};

/// CLI failure classes, one per exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config keys, or constraint violations (exit 2).
    Config(String),
    /// Unreadable or unwritable files (exit 3).
    Io(String),
    /// The solver itself failed (exit 1).
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Io(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<CboError> for CliError {
    fn from(e: CboError) -> Self {
        match &e {
            CboError::InvalidParameter { .. }
            | CboError::DimensionMismatch { .. }
            | CboError::EmptyInput { .. }
            | CboError::MissingGradient { .. }
            | CboError::MissingMinimizer { .. }
            | CboError::PointCloudFormat { .. } => CliError::Config(e.to_string()),
            CboError::Io(_) => CliError::Io(e.to_string()),
            CboError::DegenerateVector { .. }
            | CboError::NonFinite { .. }
            | CboError::NoConvergence { .. } => CliError::Runtime(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "sphere-cbo",
    version,
    about = "Consensus-based optimization on the unit hypersphere",
    long_about = "Multi-agent derivative-free minimization of objectives constrained to the \
                  unit sphere, with anisotropic or isotropic exploration noise, plus the \
                  benchmark, robust-PCA, and phase-retrieval experiment drivers."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One optimization run; prints a JSON report.
    SingleRun(SingleRunArgs),
    /// Success tables for the synthetic benchmark functions (CSV/JSON).
    BenchmarkSweep(SweepArgs),
    /// Recovery table for the spiked-cloud robust-PCA experiment.
    RobustPca(PcaArgs),
    /// Reconstruction success rate vs number of measurement vectors.
    PhaseRetrieval(PrArgs),
    /// Randomized invariant checks; exits nonzero if any property fails.
    PropertySuite(SuiteArgs),
}

#[derive(Args)]
struct SingleRunArgs {
    #[command(flatten)]
    solver: SolverArgs,

    /// Benchmark objective: ackley, rastrigin, griewank, salomon, alpine,
    /// or xsy-random. Mutually exclusive with --pointcloud.
    #[arg(long)]
    function: Option<String>,

    /// Ambient dimension (required with --function).
    #[arg(long)]
    dim: Option<usize>,

    /// Rotate the minimizer by this angle (radians, in [0, pi]) away from
    /// the last cardinal axis.
    #[arg(long)]
    rotate_angle: Option<f64>,

    /// Coefficient handling for xsy-random: frozen or per-evaluation.
    #[arg(long)]
    xsy_mode: Option<String>,

    /// Minimize the projection energy of this point-cloud CSV file
    /// (one point per line) instead of a benchmark function.
    #[arg(long)]
    pointcloud: Option<PathBuf>,

    /// Residual exponent of the projection energy (with --pointcloud).
    #[arg(long)]
    p_exponent: Option<f64>,

    /// Initialization: uniform (default) or vmf (concentrated at the
    /// known minimizer; requires --kappa).
    #[arg(long)]
    init: Option<String>,

    /// Concentration of the vmf initialization.
    #[arg(long)]
    kappa: Option<f64>,

    /// Inject a projected gradient-descent step periodically.
    #[arg(long)]
    gkv: bool,

    /// Iterations between injected gradient steps (requires --gkv).
    #[arg(long)]
    ell: Option<u64>,

    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out_json: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    solver: SolverArgs,

    /// Comma-separated benchmark functions; an empty list emits a
    /// header-only table.
    #[arg(long = "functions", alias = "function", value_delimiter = ',')]
    functions: Vec<String>,

    /// Ambient dimension.
    #[arg(long, default_value_t = 20)]
    dim: usize,

    /// Rotate the minimizer by this angle (radians, in [0, pi]).
    #[arg(long, default_value_t = 0.0)]
    rotate_angle: f64,

    /// Independent runs per function (default 20; a config-file `runs`
    /// value overrides the default, this flag overrides both).
    #[arg(long)]
    runs: Option<usize>,

    /// Coefficient handling for xsy-random: frozen or per-evaluation.
    #[arg(long)]
    xsy_mode: Option<String>,

    /// Inject projected gradient-descent steps (central differences).
    #[arg(long)]
    gkv: bool,

    /// Iterations between injected gradient steps (requires --gkv).
    #[arg(long)]
    ell: Option<u64>,

    /// Write the CSV table here instead of stdout.
    #[arg(long)]
    out_csv: Option<PathBuf>,

    /// Also write a JSON document with the config echo and per-run records.
    #[arg(long)]
    out_json: Option<PathBuf>,
}

#[derive(Args)]
struct PcaArgs {
    #[command(flatten)]
    solver: SolverArgs,

    /// Ambient dimension of the cloud.
    #[arg(long, default_value_t = 30)]
    dim: usize,

    /// Total points per cloud (inliers + outliers).
    #[arg(long, default_value_t = 200)]
    total_points: usize,

    /// Comma-separated outlier fractions in [0, 1).
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    outlier_fractions: Vec<f64>,

    /// Residual exponent of the projection energy.
    #[arg(long, default_value_t = 1.0)]
    p_exponent: f64,

    /// Independent runs per fraction (default 10).
    #[arg(long)]
    runs: Option<usize>,

    /// Inject projected gradient-descent steps (analytic gradient).
    #[arg(long)]
    gkv: bool,

    /// Iterations between injected gradient steps (requires --gkv).
    #[arg(long)]
    ell: Option<u64>,

    /// Write the CSV table here instead of stdout.
    #[arg(long)]
    out_csv: Option<PathBuf>,

    /// Also write a JSON document with the config echo and full errors.
    #[arg(long)]
    out_json: Option<PathBuf>,
}

#[derive(Args)]
struct PrArgs {
    #[command(flatten)]
    solver: SolverArgs,

    /// Ambient dimension of the signal.
    #[arg(long, default_value_t = 10)]
    dim: usize,

    /// Comma-separated numbers of measurement vectors.
    #[arg(long, value_delimiter = ',', default_value = "20,40,100")]
    frame_sizes: Vec<usize>,

    /// Independent runs per frame size (default 10).
    #[arg(long)]
    runs: Option<usize>,

    /// Write the CSV table here instead of stdout.
    #[arg(long)]
    out_csv: Option<PathBuf>,

    /// Also write a JSON document with the config echo.
    #[arg(long)]
    out_json: Option<PathBuf>,
}

#[derive(Args)]
struct SuiteArgs {
    #[command(flatten)]
    solver: SolverArgs,
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::SingleRun(args) => single_run(args),
        Command::BenchmarkSweep(args) => sweep(args),
        Command::RobustPca(args) => robust_pca(args),
        Command::PhaseRetrieval(args) => phase_retrieval(args),
        Command::PropertySuite(args) => suite(args),
    };
    if let Err(e) = outcome {
        eprintln!("error: {}", e.message());
        std::process::exit(e.exit_code());
    }
}

/// Configure the global worker pool; 0 keeps the library default.
fn init_threads(threads: usize) -> Result<(), CliError> {
    if threads == 0 {
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Runtime(format!("cannot configure {threads} worker threads: {e}")))
}

fn parse_xsy(text: Option<&str>) -> Result<XsyMode, CliError> {
    match text.unwrap_or("per-evaluation") {
        "frozen" => Ok(XsyMode::Frozen),
        "per-evaluation" | "per-eval" | "per_evaluation" => Ok(XsyMode::PerEvaluation),
        other => Err(CliError::Config(format!(
            "unknown --xsy-mode `{other}`: expected frozen or per-evaluation"
        ))),
    }
}

fn xsy_name(mode: XsyMode) -> &'static str {
    match mode {
        XsyMode::Frozen => "frozen",
        XsyMode::PerEvaluation => "per-evaluation",
    }
}

fn parse_function(name: &str) -> Result<BenchmarkFn, CliError> {
    name.parse::<BenchmarkFn>()
        .map_err(|e| CliError::Config(e.to_string()))
}

#[derive(Serialize)]
struct SingleRunDocument<'a> {
    config: &'a EffectiveConfig,
    objective: &'a str,
    report: &'a RunReport,
}

fn single_run(args: SingleRunArgs) -> Result<(), CliError> {
    let eff = effective_solver(&args.solver)?;
    init_threads(eff.threads)?;
    let params = eff.params;

    let (objective, label) = match (&args.function, &args.pointcloud) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "--function and --pointcloud are mutually exclusive".into(),
            ))
        }
        (None, None) => {
            return Err(CliError::Config(
                "one of --function or --pointcloud is required".into(),
            ))
        }
        (Some(name), None) => {
            let function = parse_function(name)?;
            let dim = args
                .dim
                .ok_or_else(|| CliError::Config("--dim is required with --function".into()))?;
            let angle = args.rotate_angle.unwrap_or(0.0);
            let minimizer = rotated_minimizer(dim, angle)?;
            let mode = parse_xsy(args.xsy_mode.as_deref())?;
            let objective = function.objective(&minimizer, mode, params.seed);
            (objective, function.name().to_string())
        }
        (None, Some(path)) => {
            if !path.exists() {
                return Err(CliError::Config(format!(
                    "point-cloud file `{}` does not exist",
                    path.display()
                )));
            }
            let cloud = load_pointcloud_csv(path)?;
            let p = args.p_exponent.unwrap_or(1.0);
            let objective = pca_energy(&cloud, p)?;
            let label = format!("projection-energy(p={p})");
            (objective, label)
        }
    };

    let init = match args.init.as_deref().unwrap_or("uniform") {
        "uniform" => {
            if args.kappa.is_some() {
                return Err(CliError::Config("--kappa requires --init vmf".into()));
            }
            InitMode::Uniform
        }
        "vmf" | "von-mises-fisher" => {
            let kappa = args
                .kappa
                .ok_or_else(|| CliError::Config("--init vmf requires --kappa".into()))?;
            let mu = objective.minimizer().cloned().ok_or_else(|| {
                CliError::Config("--init vmf needs an objective with a known minimizer".into())
            })?;
            InitMode::VonMisesFisher { mu, kappa }
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown --init `{other}`: expected uniform or vmf"
            )))
        }
    };

    let gkv = gkv_from_flags(args.gkv, args.ell, objective.has_gradient())?;
    let opts = RunOptions {
        gkv,
        ..RunOptions::default()
    };
    let report = run_with_options(&objective, &params, &init, &opts)?;

    let mut config = EffectiveConfig::new("single-run", params, eff.threads);
    config.dim = Some(objective.dim());
    config.functions = args.function.as_ref().map(|_| vec![label.clone()]);
    config.rotate_angle = args.rotate_angle;
    config.xsy_mode = args.xsy_mode.clone();
    config.gkv = opts.gkv;
    config.p_exponent = args.pointcloud.is_some().then(|| args.p_exponent.unwrap_or(1.0));
    config.init = Some(args.init.clone().unwrap_or_else(|| "uniform".into()));
    config.kappa = args.kappa;
    config.pointcloud = args.pointcloud.as_ref().map(|p| p.display().to_string());

    let doc = SingleRunDocument {
        config: &config,
        objective: &label,
        report: &report,
    };
    let mut text = serde_json::to_string_pretty(&doc)
        .map_err(|e| CliError::Runtime(format!("JSON serialization failed: {e}")))?;
    text.push('\n');
    emit(&text, args.out_json.as_deref())
}

fn sweep(args: SweepArgs) -> Result<(), CliError> {
    let eff = effective_solver(&args.solver)?;
    init_threads(eff.threads)?;
    let runs = args.runs.or(eff.file_runs).unwrap_or(20);
    let mode = parse_xsy(args.xsy_mode.as_deref())?;
    let gkv = gkv_from_flags(args.gkv, args.ell, false)?;

    let mut specs = Vec::with_capacity(args.functions.len());
    for name in &args.functions {
        specs.push(SweepSpec {
            function: parse_function(name)?,
            dim: args.dim,
            rotate_angle: args.rotate_angle,
            params: eff.params,
            runs,
            xsy_mode: mode,
            gkv,
        });
    }
    let rows = benchmark_sweep(&specs)?;

    let mut config = EffectiveConfig::new("benchmark-sweep", eff.params, eff.threads);
    config.runs = Some(runs);
    config.dim = Some(args.dim);
    config.rotate_angle = Some(args.rotate_angle);
    config.functions = Some(rows.iter().map(|r| r.function.clone()).collect());
    config.xsy_mode = Some(xsy_name(mode).to_string());
    config.gkv = gkv;

    emit(&sweep_csv(&rows), args.out_csv.as_deref())?;
    emit_if_requested(&json_document(&config, &rows)?, args.out_json.as_deref())
}

fn robust_pca(args: PcaArgs) -> Result<(), CliError> {
    let eff = effective_solver(&args.solver)?;
    init_threads(eff.threads)?;
    let runs = args.runs.or(eff.file_runs).unwrap_or(10);
    let gkv = gkv_from_flags(args.gkv, args.ell, true)?;

    let cells = robust_pca_experiment(
        args.dim,
        args.total_points,
        &args.outlier_fractions,
        args.p_exponent,
        &eff.params,
        runs,
        gkv,
    )?;

    let mut config = EffectiveConfig::new("robust-pca", eff.params, eff.threads);
    config.runs = Some(runs);
    config.dim = Some(args.dim);
    config.total_points = Some(args.total_points);
    config.outlier_fractions = Some(args.outlier_fractions.clone());
    config.p_exponent = Some(args.p_exponent);
    config.gkv = gkv;

    emit(&pca_csv(&cells), args.out_csv.as_deref())?;
    emit_if_requested(&json_document(&config, &cells)?, args.out_json.as_deref())
}

fn phase_retrieval(args: PrArgs) -> Result<(), CliError> {
    let eff = effective_solver(&args.solver)?;
    init_threads(eff.threads)?;
    let runs = args.runs.or(eff.file_runs).unwrap_or(10);

    let cells = phase_retrieval_curve(args.dim, &args.frame_sizes, &eff.params, runs)?;

    let mut config = EffectiveConfig::new("phase-retrieval", eff.params, eff.threads);
    config.runs = Some(runs);
    config.dim = Some(args.dim);
    config.frame_sizes = Some(args.frame_sizes.clone());

    emit(&pr_csv(&cells), args.out_csv.as_deref())?;
    emit_if_requested(&json_document(&config, &cells)?, args.out_json.as_deref())
}

fn suite(args: SuiteArgs) -> Result<(), CliError> {
    let eff = effective_solver(&args.solver)?;
    init_threads(eff.threads)?;
    let reports = property_suite(eff.params.seed)?;
    for r in &reports {
        println!(
            "{} {} (cases {}, worst {:.3e}, bound {:.3e})",
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.cases,
            r.worst,
            r.bound
        );
    }
    if reports.iter().any(|r| !r.pass) {
        return Err(CliError::Runtime("property suite reported a failure".into()));
    }
    Ok(())
}
