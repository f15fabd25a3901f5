//! Result emission: fixed-schema CSV tables and JSON documents carrying the
//! config echo plus per-run records. Floats are printed with 17 significant
//! digits so a parsed table reproduces the computed values bit for bit.

use std::fs;
use std::path::Path;

use serde::Serialize;
use sphere_cbo::experiments::{PcaCell, PrCell, SweepRow};

use crate::config::EffectiveConfig;
use crate::CliError;

/// A float with 17 significant digits; round-trips to the same bits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Like [`fmt_float`], with the table convention of `-` for "no value"
/// (e.g. mean error when no run succeeded).
pub fn fmt_opt_float(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_else(|| "-".to_string())
}

/// CSV for benchmark sweeps. Column schema (fixed):
/// `function,noise,d,N,M,runs,success_rate,mean_error,N_avg,n_avg,seed`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("function,noise,d,N,M,runs,success_rate,mean_error,N_avg,n_avg,seed\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            row.function,
            row.noise,
            row.dim,
            row.n_agents,
            row.batch_size,
            row.runs,
            fmt_float(row.success_rate),
            fmt_opt_float(row.mean_error),
            fmt_float(row.avg_agents),
            fmt_float(row.mean_iterations),
            row.seed,
        ));
    }
    out
}

/// CSV for the robust-PCA recovery table.
pub fn pca_csv(cells: &[PcaCell]) -> String {
    let mut out = String::from(
        "outlier_fraction,inliers,outliers,runs,success_rate,wilson_low,wilson_high,mean_error,n_avg,seed\n",
    );
    for cell in cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            fmt_float(cell.outlier_fraction),
            cell.inliers,
            cell.outliers,
            cell.runs,
            fmt_float(cell.success_rate),
            fmt_float(cell.wilson_low),
            fmt_float(cell.wilson_high),
            fmt_float(cell.mean_error),
            fmt_float(cell.mean_iterations),
            cell.seed,
        ));
    }
    out
}

/// CSV for the phase-retrieval success curve.
pub fn pr_csv(cells: &[PrCell]) -> String {
    let mut out = String::from(
        "frame_size,runs,success_rate,wilson_low,wilson_high,mean_error,n_avg,seed\n",
    );
    for cell in cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            cell.frame_size,
            cell.runs,
            fmt_float(cell.success_rate),
            fmt_float(cell.wilson_low),
            fmt_float(cell.wilson_high),
            fmt_opt_float(cell.mean_error),
            fmt_float(cell.mean_iterations),
            cell.seed,
        ));
    }
    out
}

/// The top-level JSON layout: the merged configuration followed by the
/// result rows (which retain their per-run records).
#[derive(Serialize)]
struct JsonDocument<'a, T: Serialize> {
    config: &'a EffectiveConfig,
    rows: &'a [T],
}

/// Render the config echo plus rows as pretty JSON.
pub fn json_document<T: Serialize>(config: &EffectiveConfig, rows: &[T]) -> Result<String, CliError> {
    let doc = JsonDocument { config, rows };
    serde_json::to_string_pretty(&doc)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| CliError::Runtime(format!("JSON serialization failed: {e}")))
}

/// Write `text` to `path`, or to stdout when no path is given.
pub fn emit(text: &str, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text)
            .map_err(|e| CliError::Io(format!("cannot write `{}`: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Write `text` to `path` when given; otherwise do nothing (used for the
/// JSON side channel, which is opt-in next to the default CSV).
pub fn emit_if_requested(text: &str, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => emit(text, Some(p)),
        None => Ok(()),
    }
}
