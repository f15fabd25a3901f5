//! Configuration layering: built-in defaults, then an optional flat TOML
//! file, then command-line flags. The file carries the solver knobs plus
//! `threads`, `runs`, and `seed`; experiment topology (functions, sizes,
//! paths) lives on flags only, so the unknown-key check stays strict.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use sphere_cbo::dynamics::{NoiseMode, SolverParams};
use sphere_cbo::gradient::GkvParams;

use crate::CliError;

/// Environment variable consulted for the seed when neither a flag nor a
/// config file provides one.
pub const SEED_ENV_VAR: &str = "SPHERE_CBO_SEED";

/// Solver flags shared by every subcommand. All values are optional; the
/// effective configuration is defaults, overridden by the `--config` file,
/// overridden by these flags.
#[derive(Args, Debug, Clone, Default)]
pub struct SolverArgs {
    /// Drift strength toward the consensus point.
    #[arg(long)]
    pub lambda: Option<f64>,

    /// Exploration noise strength.
    #[arg(long)]
    pub sigma: Option<f64>,

    /// Time step of the projected Euler scheme.
    #[arg(long)]
    pub dt: Option<f64>,

    /// Softmin sharpness; accepts a number or the literal "inf".
    #[arg(long)]
    pub alpha: Option<String>,

    /// Initial number of agents.
    #[arg(long)]
    pub n_agents: Option<usize>,

    /// Agents evaluated per iteration (clamped to the active count).
    #[arg(long)]
    pub batch_size: Option<usize>,

    /// Agent-discarding aggressiveness in [0, 1]; 0 disables discarding.
    #[arg(long)]
    pub mu: Option<f64>,

    /// Agent count never discarded below.
    #[arg(long)]
    pub n_min: Option<usize>,

    /// Iteration cap.
    #[arg(long)]
    pub max_iter: Option<u64>,

    /// Consecutive small consensus moves that trigger a stall stop.
    #[arg(long)]
    pub n_stall: Option<u64>,

    /// Consensus movement (Euclidean) counted as "small" by the stall rule.
    #[arg(long)]
    pub delta_stall: Option<f64>,

    /// Noise mode: "aniso" (componentwise) or "iso" (distance-scaled).
    #[arg(long)]
    pub noise: Option<String>,

    /// Master seed; fixes every random decision in the process.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Iterations between ensemble-variance measurements (discard cadence).
    #[arg(long)]
    pub discard_period: Option<u64>,

    /// Flat TOML file with solver keys (same names as the flags,
    /// `-`/`_` interchangeable) plus `threads`, `runs`, and `seed`.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Worker threads for run-parallel experiments; 0 picks the library
    /// default. Results are identical for any thread count.
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Values read from a `--config` file.
#[derive(Debug, Default)]
pub struct FileConfig {
    pub lambda: Option<f64>,
    pub sigma: Option<f64>,
    pub dt: Option<f64>,
    pub alpha: Option<f64>,
    pub n_agents: Option<usize>,
    pub batch_size: Option<usize>,
    pub mu: Option<f64>,
    pub n_min: Option<usize>,
    pub max_iter: Option<u64>,
    pub n_stall: Option<u64>,
    pub delta_stall: Option<f64>,
    pub noise: Option<NoiseMode>,
    pub seed: Option<u64>,
    pub discard_period: Option<u64>,
    pub threads: Option<usize>,
    pub runs: Option<usize>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn as_f64(key: &str, value: &toml::Value) -> Result<f64, CliError> {
    match value {
        toml::Value::Float(x) => Ok(*x),
        toml::Value::Integer(x) => Ok(*x as f64),
        other => Err(config_err(format!(
            "configuration key `{key}` must be a number, found {}",
            other.type_str()
        ))),
    }
}

fn as_alpha(key: &str, value: &toml::Value) -> Result<f64, CliError> {
    if let toml::Value::String(s) = value {
        return parse_alpha(s);
    }
    as_f64(key, value)
}

fn as_usize(key: &str, value: &toml::Value) -> Result<usize, CliError> {
    match value {
        toml::Value::Integer(x) if *x >= 0 => Ok(*x as usize),
        other => Err(config_err(format!(
            "configuration key `{key}` must be a non-negative integer, found {}",
            other.type_str()
        ))),
    }
}

fn as_u64(key: &str, value: &toml::Value) -> Result<u64, CliError> {
    match value {
        toml::Value::Integer(x) if *x >= 0 => Ok(*x as u64),
        other => Err(config_err(format!(
            "configuration key `{key}` must be a non-negative integer, found {}",
            other.type_str()
        ))),
    }
}

fn as_noise(key: &str, value: &toml::Value) -> Result<NoiseMode, CliError> {
    match value {
        toml::Value::String(s) => s
            .parse::<NoiseMode>()
            .map_err(|e| config_err(format!("configuration key `{key}`: {e}"))),
        other => Err(config_err(format!(
            "configuration key `{key}` must be a string, found {}",
            other.type_str()
        ))),
    }
}

/// Parse a flat TOML config file. One level of `[section]` grouping is
/// allowed; keys are flattened into a single namespace. Unknown or
/// duplicated keys are errors naming the key.
pub fn load_file(path: &Path) -> Result<FileConfig, CliError> {
    if !path.exists() {
        return Err(config_err(format!(
            "config file `{}` does not exist",
            path.display()
        )));
    }
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read `{}`: {e}", path.display())))?;
    let value: toml::Value = text
        .parse()
        .map_err(|e| config_err(format!("config file `{}`: {e}", path.display())))?;
    let table = value
        .as_table()
        .ok_or_else(|| config_err("config file must be a table of key = value entries"))?;

    let mut flat: Vec<(String, toml::Value)> = Vec::new();
    for (key, entry) in table {
        if let Some(section) = entry.as_table() {
            for (inner, inner_value) in section {
                if inner_value.is_table() {
                    return Err(config_err(format!(
                        "unknown configuration key `{key}.{inner}`: nested tables are not supported"
                    )));
                }
                flat.push((inner.replace('-', "_"), inner_value.clone()));
            }
        } else {
            flat.push((key.replace('-', "_"), entry.clone()));
        }
    }

    let mut cfg = FileConfig::default();
    let mut seen: Vec<String> = Vec::new();
    for (key, entry) in &flat {
        if seen.contains(key) {
            return Err(config_err(format!("configuration key `{key}` appears more than once")));
        }
        seen.push(key.clone());
        match key.as_str() {
            "lambda" => cfg.lambda = Some(as_f64(key, entry)?),
            "sigma" => cfg.sigma = Some(as_f64(key, entry)?),
            "dt" => cfg.dt = Some(as_f64(key, entry)?),
            "alpha" => cfg.alpha = Some(as_alpha(key, entry)?),
            "n_agents" => cfg.n_agents = Some(as_usize(key, entry)?),
            "batch_size" => cfg.batch_size = Some(as_usize(key, entry)?),
            "mu" => cfg.mu = Some(as_f64(key, entry)?),
            "n_min" => cfg.n_min = Some(as_usize(key, entry)?),
            "max_iter" => cfg.max_iter = Some(as_u64(key, entry)?),
            "n_stall" => cfg.n_stall = Some(as_u64(key, entry)?),
            "delta_stall" => cfg.delta_stall = Some(as_f64(key, entry)?),
            "noise" => cfg.noise = Some(as_noise(key, entry)?),
            "seed" => cfg.seed = Some(as_u64(key, entry)?),
            "discard_period" => cfg.discard_period = Some(as_u64(key, entry)?),
            "threads" => cfg.threads = Some(as_usize(key, entry)?),
            "runs" => cfg.runs = Some(as_usize(key, entry)?),
            other => {
                return Err(config_err(format!("unknown configuration key `{other}`")));
            }
        }
    }
    Ok(cfg)
}

/// Parse an `--alpha` value: a float or the literal "inf".
pub fn parse_alpha(text: &str) -> Result<f64, CliError> {
    let lowered = text.trim().to_ascii_lowercase();
    if matches!(lowered.as_str(), "inf" | "+inf" | "infinity") {
        return Ok(f64::INFINITY);
    }
    lowered
        .parse::<f64>()
        .map_err(|_| config_err(format!("invalid --alpha value `{text}`: expected a number or \"inf\"")))
}

/// Everything merged: the solver parameters plus the process-level knobs
/// shared by all subcommands.
pub struct Effective {
    pub params: SolverParams,
    pub threads: usize,
    /// `runs` from the config file, if any (flag overrides happen at the
    /// subcommand level, where the default also lives).
    pub file_runs: Option<usize>,
}

/// Apply the file and flag layers on top of the defaults and validate.
pub fn effective_solver(flags: &SolverArgs) -> Result<Effective, CliError> {
    let file = flags.config.as_deref().map(load_file).transpose()?.unwrap_or_default();
    let mut p = SolverParams::default();

    if let Some(v) = file.lambda {
        p.lambda = v;
    }
    if let Some(v) = file.sigma {
        p.sigma = v;
    }
    if let Some(v) = file.dt {
        p.dt = v;
    }
    if let Some(v) = file.alpha {
        p.alpha = v;
    }
    if let Some(v) = file.n_agents {
        p.n_agents = v;
    }
    if let Some(v) = file.batch_size {
        p.batch_size = v;
    }
    if let Some(v) = file.mu {
        p.mu = v;
    }
    if let Some(v) = file.n_min {
        p.n_min = v;
    }
    if let Some(v) = file.max_iter {
        p.max_iter = v;
    }
    if let Some(v) = file.n_stall {
        p.n_stall = v;
    }
    if let Some(v) = file.delta_stall {
        p.delta_stall = v;
    }
    if let Some(v) = file.noise {
        p.noise_mode = v;
    }
    if let Some(v) = file.discard_period {
        p.discard_period = v;
    }

    if let Some(v) = flags.lambda {
        p.lambda = v;
    }
    if let Some(v) = flags.sigma {
        p.sigma = v;
    }
    if let Some(v) = flags.dt {
        p.dt = v;
    }
    if let Some(text) = &flags.alpha {
        p.alpha = parse_alpha(text)?;
    }
    if let Some(v) = flags.n_agents {
        p.n_agents = v;
    }
    if let Some(v) = flags.batch_size {
        p.batch_size = v;
    }
    if let Some(v) = flags.mu {
        p.mu = v;
    }
    if let Some(v) = flags.n_min {
        p.n_min = v;
    }
    if let Some(v) = flags.max_iter {
        p.max_iter = v;
    }
    if let Some(v) = flags.n_stall {
        p.n_stall = v;
    }
    if let Some(v) = flags.delta_stall {
        p.delta_stall = v;
    }
    if let Some(text) = &flags.noise {
        p.noise_mode = text
            .parse::<NoiseMode>()
            .map_err(|e| config_err(e.to_string()))?;
    }
    if let Some(v) = flags.discard_period {
        p.discard_period = v;
    }

    // Seed precedence: flag, then file, then environment, then the default.
    p.seed = if let Some(s) = flags.seed {
        s
    } else if let Some(s) = file.seed {
        s
    } else if let Ok(text) = std::env::var(SEED_ENV_VAR) {
        text.trim().parse::<u64>().map_err(|_| {
            config_err(format!("{SEED_ENV_VAR} must be an unsigned integer, found `{text}`"))
        })?
    } else {
        p.seed
    };

    p.validate().map_err(|e| config_err(e.to_string()))?;
    let threads = flags.threads.or(file.threads).unwrap_or(0);
    Ok(Effective {
        params: p,
        threads,
        file_runs: file.runs,
    })
}

/// Build the gradient-injection parameters from the `--gkv`/`--ell` flags.
///
/// `analytic` picks the gradient source: `true` for objectives that carry
/// one (the projection energy), `false` to fall back to central
/// differences (the benchmark functions).
pub fn gkv_from_flags(enabled: bool, ell: Option<u64>, analytic: bool) -> Result<Option<GkvParams>, CliError> {
    if !enabled {
        if ell.is_some() {
            return Err(config_err("--ell requires --gkv"));
        }
        return Ok(None);
    }
    let mut g = GkvParams::default();
    if let Some(ell) = ell {
        g.ell = ell;
    }
    if !analytic {
        g.source = sphere_cbo::gradient::GradientSource::CentralDifference {
            step: sphere_cbo::gradient::DEFAULT_FD_STEP,
        };
    }
    g.validate().map_err(|e| config_err(e.to_string()))?;
    Ok(Some(g))
}

/// The fully merged settings echoed into every JSON document, so tables can
/// be traced back to their exact inputs.
#[derive(Serialize, Clone, Debug)]
pub struct EffectiveConfig {
    pub command: String,
    pub solver: SolverParams,
    pub threads: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub functions: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rotate_angle: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xsy_mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gkv: Option<GkvParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_exponent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outlier_fractions: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frame_sizes: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pointcloud: Option<String>,
}

impl EffectiveConfig {
    /// A config echo with only the universal fields filled in.
    pub fn new(command: &str, params: SolverParams, threads: usize) -> Self {
        EffectiveConfig {
            command: command.to_string(),
            solver: params,
            threads,
            runs: None,
            dim: None,
            functions: None,
            rotate_angle: None,
            xsy_mode: None,
            gkv: None,
            p_exponent: None,
            total_points: None,
            outlier_fractions: None,
            frame_sizes: None,
            init: None,
            kappa: None,
            pointcloud: None,
        }
    }
}
