//! Experiment drivers and independent reference computations.
//!
//! Three table producers sit here: synthetic benchmark sweeps over the
//! rotated test functions (success counted by the sup-norm criterion),
//! robust-PCA recovery on spiked Haystack clouds scored against a
//! power-iteration reference direction, and phase-retrieval success curves
//! over the number of frame vectors. Each table cell aggregates independent
//! runs whose streams derive from `(master seed, cell index, run index)`,
//! so parallel scheduling cannot change any number and identical inputs
//! reproduce identical tables bit for bit.
//!
//! The module also hosts the randomized self-checks used by the test
//! battery and the CLI: a fuzzer asserting that agents stay on the sphere
//! and that projected noise is tangent, and a property suite checking the
//! ensemble-variance identity, the softmin moment bounds, and the
//! monotonicity of the softmin value toward the minimum.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::consensus::consensus_point;
use crate::dynamics::{
    draw_noise, noise_increment, run, run_with_options, step_anisotropic_with_noise,
    step_isotropic_with_noise, InitMode, NoiseMode, RunOptions, SolverParams, StopReason,
};
use crate::error::{CboError, Result};
use crate::gradient::GkvParams;
use crate::objectives::{
    gaussian_frame, haystack, pca_energy, phase_retrieval_risk, rotated_minimizer, BenchmarkFn,
    PointCloud, XsyMode,
};
use crate::rng::{master_rng, mix64, substream};
use crate::sphere::{dot, folded_euclidean_dist, norm, Ensemble, UnitVector, DEGENERATE_NORM};

/// A robust-PCA run counts as recovered when its sign-folded Euclidean
/// distance to the reference direction is at most this.
pub const PCA_SUCCESS_TOLERANCE: f64 = 5e-2;

/// Two-sided 95% normal quantile used by [`wilson_interval`].
const WILSON_Z: f64 = 1.959_963_984_540_054;

// ---------------------------------------------------------------------------
// Benchmark sweeps
// ---------------------------------------------------------------------------

/// One cell of a benchmark sweep: a test function at a dimension and one
/// solver configuration, repeated over independent runs.
#[derive(Clone, Debug)]
pub struct SweepSpec {
    /// Which synthetic objective to minimize.
    pub function: BenchmarkFn,
    /// Ambient dimension of the sphere.
    pub dim: usize,
    /// Rotation angle (radians, in `[0, pi]`) placing the minimizer away
    /// from the pole in the `(e_1, e_d)` plane.
    pub rotate_angle: f64,
    /// Solver configuration; `params.seed` is the master seed for the cell.
    pub params: SolverParams,
    /// Number of independent repetitions.
    pub runs: usize,
    /// Coefficient handling for the random-coefficient objective (ignored
    /// by the deterministic functions).
    pub xsy_mode: XsyMode,
    /// Inject gradient steps with these parameters, when present.
    pub gkv: Option<GkvParams>,
}

impl SweepSpec {
    /// Check every documented constraint on the cell.
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if let Some(g) = &self.gkv {
            g.validate()?;
        }
        if self.runs == 0 {
            return Err(CboError::InvalidParameter {
                name: "runs",
                value: self.runs.to_string(),
                constraint: "at least one repetition is required",
            });
        }
        // Validates both the dimension and the angle range.
        rotated_minimizer(self.dim, self.rotate_angle).map(|_| ())
    }
}

/// Outcome of a single run inside a sweep cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    /// Index of the run within its cell.
    pub run_index: usize,
    /// The derived seed this run was driven by.
    pub seed: u64,
    /// Sup-norm success verdict (`None` when the objective has no known
    /// minimizer).
    pub success: Option<bool>,
    /// The sup-norm distance behind `success`.
    pub sup_error: Option<f64>,
    /// Iterations executed.
    pub iterations: u64,
    /// Time average of the active agent count.
    pub avg_agents: f64,
    /// Objective evaluations spent.
    pub objective_evals: u64,
    /// Why the run stopped.
    pub stop_reason: StopReason,
}

/// Aggregated results of one sweep cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    /// Display name of the objective.
    pub function: String,
    /// Noise mode the cell ran under.
    pub noise: NoiseMode,
    /// Ambient dimension.
    pub dim: usize,
    /// Initial agent count.
    pub n_agents: usize,
    /// Batch size.
    pub batch_size: usize,
    /// Repetitions aggregated into this row.
    pub runs: usize,
    /// Number of successful runs.
    pub successes: usize,
    /// `successes / runs`.
    pub success_rate: f64,
    /// Lower end of the Wilson 95% interval for the success rate.
    pub wilson_low: f64,
    /// Upper end of the Wilson 95% interval for the success rate.
    pub wilson_high: f64,
    /// Mean sup-norm error over the successful runs only; `None` when no
    /// run succeeded.
    pub mean_error: Option<f64>,
    /// Mean over runs of the time-averaged active agent count.
    pub avg_agents: f64,
    /// Mean iteration count over all runs.
    pub mean_iterations: f64,
    /// Runs that stopped on the stall criterion.
    pub stall_count: usize,
    /// Runs that exhausted the iteration cap.
    pub max_iter_count: usize,
    /// Master seed of the cell.
    pub seed: u64,
    /// Per-run outcomes, in run order.
    pub records: Vec<RunRecord>,
}

/// Seed for run `run` of table cell `cell` under `master`.
fn run_seed(master: u64, cell: u64, run: u64) -> u64 {
    mix64(mix64(master, cell), run)
}

/// Execute every sweep cell and aggregate each into a table row.
///
/// Runs within a cell execute in parallel; results are keyed by run index,
/// so the table is identical regardless of scheduling.
pub fn benchmark_sweep(specs: &[SweepSpec]) -> Result<Vec<SweepRow>> {
    specs
        .iter()
        .enumerate()
        .map(|(cell, spec)| sweep_cell(cell as u64, spec))
        .collect()
}

fn sweep_cell(cell: u64, spec: &SweepSpec) -> Result<SweepRow> {
    spec.validate()?;
    let minimizer = rotated_minimizer(spec.dim, spec.rotate_angle)?;
    let records = (0..spec.runs)
        .into_par_iter()
        .map(|run_index| -> Result<RunRecord> {
            let seed = run_seed(spec.params.seed, cell, run_index as u64);
            let obj = spec.function.objective(&minimizer, spec.xsy_mode, seed);
            let params = SolverParams { seed, ..spec.params };
            let opts = RunOptions { gkv: spec.gkv, ..RunOptions::default() };
            let report = run_with_options(&obj, &params, &InitMode::Uniform, &opts)?;
            Ok(RunRecord {
                run_index,
                seed,
                success: report.success,
                sup_error: report.sup_error,
                iterations: report.iterations,
                avg_agents: report.avg_agents,
                objective_evals: report.objective_evals,
                stop_reason: report.stop_reason,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let successes = records.iter().filter(|r| r.success == Some(true)).count();
    let runs = spec.runs as f64;
    let (wilson_low, wilson_high) = wilson_interval(successes, spec.runs);
    let mean_error = if successes > 0 {
        let total: f64 = records
            .iter()
            .filter(|r| r.success == Some(true))
            .filter_map(|r| r.sup_error)
            .sum();
        Some(total / successes as f64)
    } else {
        None
    };
    let stall_count = records
        .iter()
        .filter(|r| r.stop_reason == StopReason::Stall)
        .count();
    Ok(SweepRow {
        function: spec.function.name().to_string(),
        noise: spec.params.noise_mode,
        dim: spec.dim,
        n_agents: spec.params.n_agents,
        batch_size: spec.params.batch_size,
        runs: spec.runs,
        successes,
        success_rate: successes as f64 / runs,
        wilson_low,
        wilson_high,
        mean_error,
        avg_agents: records.iter().map(|r| r.avg_agents).sum::<f64>() / runs,
        mean_iterations: records.iter().map(|r| r.iterations as f64).sum::<f64>() / runs,
        stall_count,
        max_iter_count: spec.runs - stall_count,
        seed: spec.params.seed,
        records,
    })
}

/// Wilson 95% score interval for `successes` out of `trials`.
///
/// Both ends are clamped to `[0, 1]`; zero trials yield the vacuous
/// interval `(0, 1)`.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let phat = successes as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let center = (phat + z2 / (2.0 * n)) / denom;
    let half = (WILSON_Z / denom) * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt();
    // At the extremes the exact bound coincides with the point rate; guard
    // the bracket against the last-ulp roundoff of `center - half`.
    let low = (center - half).max(0.0).min(phat);
    let high = (center + half).min(1.0).max(phat);
    (low, high)
}

// ---------------------------------------------------------------------------
// Reference direction for robust PCA
// ---------------------------------------------------------------------------

/// Dominant eigenvector of the second-moment matrix `(1/P) sum_i x_i x_i^T`
/// by power iteration from a uniform random start.
///
/// Convergence is declared when the residual `|Av - theta v|` falls below
/// `tol * theta` with `theta = <Av, v>`; the sign is then fixed so the
/// largest-magnitude component is positive, making the result a canonical
/// representative of the `{v, -v}` pair.
pub fn power_iteration_top_direction(
    cloud: &PointCloud,
    max_iters: usize,
    tol: f64,
    rng: &mut ChaCha8Rng,
) -> Result<UnitVector> {
    if cloud.is_empty() {
        return Err(CboError::EmptyInput {
            context: "power iteration point cloud",
        });
    }
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(CboError::InvalidParameter {
            name: "tol",
            value: format!("{tol}"),
            constraint: "tolerance must be finite and non-negative",
        });
    }
    let count = cloud.len() as f64;
    let mut v = UnitVector::sample_uniform(cloud.dim(), rng)?.into_vec();
    let mut av = vec![0.0; cloud.dim()];
    let mut residual = f64::INFINITY;
    for it in 0..max_iters {
        av.iter_mut().for_each(|c| *c = 0.0);
        for x in cloud.rows() {
            let weight = dot(x, &v) / count;
            for (a, xk) in av.iter_mut().zip(x) {
                *a += weight * xk;
            }
        }
        let theta = dot(&av, &v);
        residual = av
            .iter()
            .zip(&v)
            .map(|(a, vk)| (a - theta * vk) * (a - theta * vk))
            .sum::<f64>()
            .sqrt();
        if residual <= tol * theta.abs() {
            let lead = v
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map(|(i, _)| i)
                .unwrap_or(0);
            if v[lead] < 0.0 {
                v.iter_mut().for_each(|c| *c = -*c);
            }
            return UnitVector::normalized(&v);
        }
        let scale = norm(&av);
        if scale < DEGENERATE_NORM {
            return Err(CboError::DegenerateVector {
                context: format!("power iteration at iteration {it}"),
                norm: scale,
            });
        }
        for (vk, a) in v.iter_mut().zip(&av) {
            *vk = a / scale;
        }
    }
    Err(CboError::NoConvergence {
        context: "power iteration",
        iterations: max_iters,
        residual,
    })
}

// ---------------------------------------------------------------------------
// Robust PCA on Haystack clouds
// ---------------------------------------------------------------------------

/// Aggregated recovery results at one outlier fraction.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PcaCell {
    /// Requested fraction of outliers in the cloud.
    pub outlier_fraction: f64,
    /// Inlier count actually used.
    pub inliers: usize,
    /// Outlier count actually used.
    pub outliers: usize,
    /// Repetitions aggregated into this cell.
    pub runs: usize,
    /// Sign-folded Euclidean distance to the reference direction, one entry
    /// per run in run order.
    pub errors: Vec<f64>,
    /// Mean of `errors` over all runs.
    pub mean_error: f64,
    /// Fraction of runs with error at most [`PCA_SUCCESS_TOLERANCE`].
    pub success_rate: f64,
    /// Lower end of the Wilson 95% interval for the recovery rate.
    pub wilson_low: f64,
    /// Upper end of the Wilson 95% interval for the recovery rate.
    pub wilson_high: f64,
    /// Mean iteration count over all runs.
    pub mean_iterations: f64,
    /// Master seed of the experiment.
    pub seed: u64,
}

/// Recovery table for the spiked-cloud experiment: at each outlier
/// fraction, sample a fresh cloud per run, minimize the projection energy,
/// and score the final consensus against the dominant direction of the
/// noiseless rank-one inlier samples.
///
/// `total_points` is split as `outliers = round(total * fraction)`,
/// `inliers = total - outliers`; each fraction must lie in `[0, 1)` and
/// leave at least one inlier. The solver's `seed` is the master seed; the
/// cloud and the reference computation draw from a separate stream of each
/// run's seed, so they are independent of the solver's randomness.
pub fn robust_pca_experiment(
    dim: usize,
    total_points: usize,
    outlier_fractions: &[f64],
    p_exponent: f64,
    solver: &SolverParams,
    runs: usize,
    gkv: Option<GkvParams>,
) -> Result<Vec<PcaCell>> {
    solver.validate()?;
    if let Some(g) = &gkv {
        g.validate()?;
    }
    if runs == 0 {
        return Err(CboError::InvalidParameter {
            name: "runs",
            value: runs.to_string(),
            constraint: "at least one repetition is required",
        });
    }
    if outlier_fractions.is_empty() {
        return Err(CboError::EmptyInput {
            context: "outlier fraction list",
        });
    }
    outlier_fractions
        .iter()
        .enumerate()
        .map(|(cell, &fraction)| {
            if !(0.0..1.0).contains(&fraction) {
                return Err(CboError::InvalidParameter {
                    name: "outlier_fractions",
                    value: format!("{fraction}"),
                    constraint: "each fraction must lie in [0, 1)",
                });
            }
            let outliers = (total_points as f64 * fraction).round() as usize;
            let inliers = total_points.saturating_sub(outliers);
            if inliers == 0 {
                return Err(CboError::InvalidParameter {
                    name: "outlier_fractions",
                    value: format!("{fraction}"),
                    constraint: "the fraction must leave at least one inlier",
                });
            }
            let per_run = (0..runs)
                .into_par_iter()
                .map(|run_index| -> Result<(f64, u64)> {
                    let seed = run_seed(solver.seed, cell as u64, run_index as u64);
                    let mut data_rng = substream(seed, 1);
                    let hay = haystack(dim, inliers, outliers, &mut data_rng)?;
                    let obj = pca_energy(&hay.cloud, p_exponent)?;
                    let params = SolverParams { seed, ..*solver };
                    let opts = RunOptions { gkv, ..RunOptions::default() };
                    let report = run_with_options(&obj, &params, &InitMode::Uniform, &opts)?;
                    let reference = power_iteration_top_direction(
                        &hay.rank_one_inliers,
                        10_000,
                        1e-12,
                        &mut data_rng,
                    )?;
                    let error = folded_euclidean_dist(
                        &report.final_consensus.point,
                        reference.as_slice(),
                    );
                    Ok((error, report.iterations))
                })
                .collect::<Result<Vec<_>>>()?;
            let errors: Vec<f64> = per_run.iter().map(|r| r.0).collect();
            let recovered = errors.iter().filter(|&&e| e <= PCA_SUCCESS_TOLERANCE).count();
            let (wilson_low, wilson_high) = wilson_interval(recovered, runs);
            Ok(PcaCell {
                outlier_fraction: fraction,
                inliers,
                outliers,
                runs,
                mean_error: errors.iter().sum::<f64>() / runs as f64,
                success_rate: recovered as f64 / runs as f64,
                wilson_low,
                wilson_high,
                mean_iterations: per_run.iter().map(|r| r.1 as f64).sum::<f64>() / runs as f64,
                seed: solver.seed,
                errors,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Phase-retrieval success curve
// ---------------------------------------------------------------------------

/// Aggregated reconstruction results at one frame size.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrCell {
    /// Number of measurement vectors in the frame.
    pub frame_size: usize,
    /// Repetitions aggregated into this cell.
    pub runs: usize,
    /// Number of successful reconstructions (sign-folded sup-norm
    /// criterion).
    pub successes: usize,
    /// `successes / runs`.
    pub success_rate: f64,
    /// Lower end of the Wilson 95% interval for the success rate.
    pub wilson_low: f64,
    /// Upper end of the Wilson 95% interval for the success rate.
    pub wilson_high: f64,
    /// Mean sup-norm error over the successful runs only; `None` when no
    /// run succeeded.
    pub mean_error: Option<f64>,
    /// Mean iteration count over all runs.
    pub mean_iterations: f64,
    /// Master seed of the experiment.
    pub seed: u64,
}

/// Success rate of signal reconstruction as a function of the number of
/// frame vectors. Every run draws a fresh truth direction and a fresh
/// Gaussian frame from a stream separate from the solver's randomness.
pub fn phase_retrieval_curve(
    dim: usize,
    frame_sizes: &[usize],
    solver: &SolverParams,
    runs: usize,
) -> Result<Vec<PrCell>> {
    solver.validate()?;
    if runs == 0 {
        return Err(CboError::InvalidParameter {
            name: "runs",
            value: runs.to_string(),
            constraint: "at least one repetition is required",
        });
    }
    if frame_sizes.is_empty() {
        return Err(CboError::EmptyInput {
            context: "frame size list",
        });
    }
    frame_sizes
        .iter()
        .enumerate()
        .map(|(cell, &frame_size)| {
            let per_run = (0..runs)
                .into_par_iter()
                .map(|run_index| -> Result<(bool, Option<f64>, u64)> {
                    let seed = run_seed(solver.seed, cell as u64, run_index as u64);
                    let mut data_rng = substream(seed, 1);
                    let truth = UnitVector::sample_uniform(dim, &mut data_rng)?;
                    let frame = gaussian_frame(dim, frame_size, &truth, &mut data_rng)?;
                    let obj = phase_retrieval_risk(&frame);
                    let params = SolverParams { seed, ..*solver };
                    let report = run(&obj, &params, &InitMode::Uniform)?;
                    Ok((
                        report.success.unwrap_or(false),
                        report.sup_error,
                        report.iterations,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            let successes = per_run.iter().filter(|r| r.0).count();
            let (wilson_low, wilson_high) = wilson_interval(successes, runs);
            let mean_error = if successes > 0 {
                let total: f64 = per_run.iter().filter(|r| r.0).filter_map(|r| r.1).sum();
                Some(total / successes as f64)
            } else {
                None
            };
            Ok(PrCell {
                frame_size,
                runs,
                successes,
                success_rate: successes as f64 / runs as f64,
                wilson_low,
                wilson_high,
                mean_error,
                mean_iterations: per_run.iter().map(|r| r.2 as f64).sum::<f64>() / runs as f64,
                seed: solver.seed,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Randomized self-checks
// ---------------------------------------------------------------------------

/// Worst deviations observed by [`sphere_invariant_fuzz`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FuzzReport {
    /// Random step configurations exercised.
    pub cases: usize,
    /// Largest `| |v| - 1 |` over all agents after a step.
    pub max_norm_error: f64,
    /// Largest `|<v, increment>|` between an agent and its projected noise
    /// increment before renormalization.
    pub max_tangency_error: f64,
}

/// Drive random single steps — both noise modes, dimensions in
/// `{2, 3, 10, 50}`, random ensembles, consensus points, and step sizes —
/// and record the worst sphere-constraint violation and the worst radial
/// component of the projected noise.
pub fn sphere_invariant_fuzz(cases: usize, seed: u64) -> Result<FuzzReport> {
    let mut rng = master_rng(seed);
    let dims = [2usize, 3, 10, 50];
    let alphas = [0.0, 1.0, 100.0, 5e4];
    let mut max_norm_error: f64 = 0.0;
    let mut max_tangency_error: f64 = 0.0;
    for case in 0..cases {
        let dim = dims[rng.gen_range(0..dims.len())];
        let n_agents = rng.gen_range(1..=10);
        let noise_mode = if case % 2 == 0 {
            NoiseMode::Anisotropic
        } else {
            NoiseMode::Isotropic
        };
        let params = SolverParams {
            lambda: 10f64.powf(rng.gen_range(-2.0..1.0)),
            sigma: rng.gen_range(0.0..5.0),
            dt: 10f64.powf(rng.gen_range(-4.0..-0.3)),
            alpha: alphas[rng.gen_range(0..alphas.len())],
            n_agents,
            batch_size: n_agents,
            n_min: 1,
            noise_mode,
            ..SolverParams::default()
        };
        let mut e = Ensemble::sample_uniform(dim, n_agents, &mut rng)?;
        let values: Vec<f64> = (0..n_agents).map(|_| rng.gen_range(-1.0..3.0)).collect();
        let vcons = consensus_point(&e, &values, params.alpha)?;
        let db = draw_noise(n_agents * dim, params.dt, &mut rng);
        for i in 0..n_agents {
            let increment =
                noise_increment(e.agent(i), &vcons.point, &params, &db[i * dim..(i + 1) * dim]);
            max_tangency_error = max_tangency_error.max(dot(e.agent(i), &increment).abs());
        }
        match noise_mode {
            NoiseMode::Anisotropic => step_anisotropic_with_noise(&mut e, &vcons, &params, &db)?,
            NoiseMode::Isotropic => step_isotropic_with_noise(&mut e, &vcons, &params, &db)?,
        }
        for i in 0..n_agents {
            max_norm_error = max_norm_error.max((norm(e.agent(i)) - 1.0).abs());
        }
    }
    Ok(FuzzReport {
        cases,
        max_norm_error,
        max_tangency_error,
    })
}

/// One line of the property suite: the worst observed value of a quantity
/// that must stay at or below `bound`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyReport {
    /// What was checked.
    pub name: &'static str,
    /// Random cases exercised.
    pub cases: usize,
    /// Worst observed value (violations are positive excesses).
    pub worst: f64,
    /// The value `worst` must not exceed.
    pub bound: f64,
    /// `worst <= bound`.
    pub pass: bool,
}

fn property(name: &'static str, cases: usize, worst: f64, bound: f64) -> PropertyReport {
    PropertyReport {
        name,
        cases,
        worst,
        bound,
        pass: worst <= bound,
    }
}

/// Run the full randomized property battery and report one line per
/// property. All streams derive from `seed`, so the suite is reproducible.
///
/// Checks, in order: sphere preservation and noise tangency (via
/// [`sphere_invariant_fuzz`]), the identity `variance = 1 - |mean|^2` on
/// unit ensembles, the softmin second- and first-moment bounds
/// (spread around the consensus point is controlled by the ensemble
/// variance times the worst-to-mean weight ratio), and that the softmin
/// value decreases monotonically toward the minimum as the sharpness
/// grows.
pub fn property_suite(seed: u64) -> Result<Vec<PropertyReport>> {
    let fuzz = sphere_invariant_fuzz(500, mix64(seed, 1))?;
    let mut reports = vec![
        property("agents stay on the unit sphere", fuzz.cases, fuzz.max_norm_error, 1e-12),
        property(
            "projected noise is tangent before renormalization",
            fuzz.cases,
            fuzz.max_tangency_error,
            1e-12,
        ),
    ];
    reports.push(variance_identity_property(mix64(seed, 2))?);
    let (second, first) = moment_bound_properties(mix64(seed, 3))?;
    reports.push(second);
    reports.push(first);
    reports.push(softmin_monotonicity_property(mix64(seed, 4))?);
    Ok(reports)
}

/// `variance = 1 - |mean|^2` holds exactly (to roundoff) on unit vectors.
fn variance_identity_property(seed: u64) -> Result<PropertyReport> {
    let mut rng = master_rng(seed);
    let cases = 100;
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let dim = rng.gen_range(2..=30);
        let n = rng.gen_range(1..=40);
        let e = Ensemble::sample_uniform(dim, n, &mut rng)?;
        let stats = e.stats();
        let identity = 1.0 - dot(&stats.mean, &stats.mean);
        worst = worst.max((stats.variance - identity).abs());
    }
    Ok(property("ensemble variance identity on the sphere", cases, worst, 1e-12))
}

/// Empirical softmin moment bounds.
///
/// With `C = max_j w_j / mean_j w_j = N / sum_j exp(-alpha (E_j - E_min))`
/// and `V = variance / 2`, the spread around the consensus point obeys
/// `(1/N) sum_j |V_j - v_cons|^2 <= 4 C V` and
/// `(1/N) sum_j |V_j - v_cons| <= 2 C sqrt(V)`.
fn moment_bound_properties(seed: u64) -> Result<(PropertyReport, PropertyReport)> {
    let mut rng = master_rng(seed);
    let alphas = [0.1, 0.5, 1.0, 2.0, 5.0, 5e4];
    let cases = 100;
    let mut worst_second: f64 = f64::NEG_INFINITY;
    let mut worst_first: f64 = f64::NEG_INFINITY;
    for case in 0..cases {
        let dim = rng.gen_range(2..=8);
        let n = rng.gen_range(2..=50);
        let e = Ensemble::sample_uniform(dim, n, &mut rng)?;
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..0.5)).collect();
        let alpha = alphas[case % alphas.len()];
        let vcons = consensus_point(&e, &values, alpha)?;
        let ratio = n as f64 / vcons.weight_sum;
        let spread_half = e.stats().variance / 2.0;
        let mut second = 0.0;
        let mut first = 0.0;
        for agent in e.rows() {
            let dist_sq: f64 = agent
                .iter()
                .zip(&vcons.point)
                .map(|(a, c)| (a - c) * (a - c))
                .sum();
            second += dist_sq;
            first += dist_sq.sqrt();
        }
        second /= n as f64;
        first /= n as f64;
        worst_second = worst_second.max(second - 4.0 * ratio * spread_half);
        worst_first = worst_first.max(first - 2.0 * ratio * spread_half.sqrt());
    }
    Ok((
        property("softmin second-moment bound", cases, worst_second, 1e-12),
        property("softmin first-moment bound", cases, worst_first, 1e-12),
    ))
}

/// The softmin value `E_min - ln(mean_j exp(-alpha (E_j - E_min))) / alpha`
/// of a value set, computed in the overflow-safe recentered form.
fn softmin_value(values: &[f64], alpha: f64) -> f64 {
    let e_min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean_weight = values
        .iter()
        .map(|&e| (-alpha * (e - e_min)).exp())
        .sum::<f64>()
        / values.len() as f64;
    e_min - mean_weight.ln() / alpha
}

/// The softmin value never drops below the true minimum and is
/// non-increasing in the sharpness parameter.
fn softmin_monotonicity_property(seed: u64) -> Result<PropertyReport> {
    let mut rng = master_rng(seed);
    let grid = [1.0, 10.0, 100.0, 1000.0];
    let cases = 100;
    let mut worst: f64 = f64::NEG_INFINITY;
    for _ in 0..cases {
        let n = rng.gen_range(2..=60);
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let e_min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut previous = f64::INFINITY;
        for &alpha in &grid {
            let value = softmin_value(&values, alpha);
            worst = worst.max(e_min - value);
            worst = worst.max(value - previous);
            previous = value;
        }
    }
    Ok(property("softmin value decreases toward the minimum", cases, worst, 1e-10))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::folded_euclidean_dist;

    fn basis_cloud() -> PointCloud {
        let e1 = vec![1.0, 0.0, 0.0];
        let e2 = vec![0.0, 1.0, 0.0];
        PointCloud::from_rows(3, &[e1.clone(), e1, e2]).unwrap()
    }

    #[test]
    fn wilson_interval_matches_reference_values() {
        let (low, high) = wilson_interval(0, 10);
        assert!((low - 0.0).abs() < 1e-12, "low = {low}");
        assert!((high - 0.2775).abs() < 5e-4, "high = {high}");

        let (low, high) = wilson_interval(10, 10);
        assert!((low - 0.7225).abs() < 5e-4, "low = {low}");
        assert!((high - 1.0).abs() < 1e-12, "high = {high}");

        let (low, high) = wilson_interval(5, 10);
        assert!((low - 0.2366).abs() < 5e-4, "low = {low}");
        assert!((high - 0.7634).abs() < 5e-4, "high = {high}");
    }

    #[test]
    fn wilson_interval_brackets_the_point_rate() {
        for trials in [1usize, 3, 10, 100] {
            for successes in 0..=trials {
                let (low, high) = wilson_interval(successes, trials);
                let rate = successes as f64 / trials as f64;
                assert!(0.0 <= low && low <= rate && rate <= high && high <= 1.0);
            }
        }
        assert_eq!(wilson_interval(0, 0), (0.0, 1.0));
    }

    #[test]
    fn power_iteration_finds_the_dominant_axis() {
        let mut rng = master_rng(51);
        let top = power_iteration_top_direction(&basis_cloud(), 200, 1e-10, &mut rng).unwrap();
        // Sign is canonical: the largest component is positive.
        assert!(top.as_slice()[0] > 0.999, "top = {:?}", top.as_slice());
        assert!(top.as_slice()[2].abs() < 1e-5);
    }

    #[test]
    fn power_iteration_exits_in_two_steps_on_rank_one_data() {
        let mut rng = master_rng(52);
        let w = [0.6, -0.8];
        let rows: Vec<Vec<f64>> = [0.5, -1.25, 2.0]
            .iter()
            .map(|c| w.iter().map(|x| c * x).collect())
            .collect();
        let cloud = PointCloud::from_rows(2, &rows).unwrap();
        // A budget of two iterations must suffice on exactly rank-one data.
        let top = power_iteration_top_direction(&cloud, 2, 1e-10, &mut rng).unwrap();
        let aligned = dot(top.as_slice(), &w).abs();
        assert!((aligned - 1.0).abs() < 1e-12, "alignment = {aligned}");
    }

    #[test]
    fn power_iteration_recovers_the_planted_direction_of_a_pure_cloud() {
        let mut rng = master_rng(53);
        let hay = haystack(30, 200, 0, &mut rng).unwrap();
        let top = power_iteration_top_direction(&hay.cloud, 10_000, 1e-10, &mut rng).unwrap();
        let w = hay.cloud.inlier_direction().unwrap();
        let aligned = dot(top.as_slice(), w.as_slice()).abs();
        assert!(aligned >= 0.99, "alignment = {aligned}");
    }

    #[test]
    fn power_iteration_rejects_empty_and_exhausted_budgets() {
        let mut rng = master_rng(54);
        let empty = PointCloud::from_rows(3, &[]);
        assert!(empty.is_err());

        // A zero tolerance cannot be met on noisy data: the residual never
        // lands exactly on zero, so the budget runs out.
        let noisy = PointCloud::from_rows(
            3,
            &[
                vec![1.0, 0.2, -0.1],
                vec![0.9, -0.3, 0.2],
                vec![-0.2, 1.1, 0.4],
            ],
        )
        .unwrap();
        let err = power_iteration_top_direction(&noisy, 3, 0.0, &mut rng).unwrap_err();
        let message = err.to_string();
        assert!(message.contains("did not converge"), "message = {message}");
        assert!(message.contains("3 iterations"), "message = {message}");
    }

    #[test]
    fn folded_error_metric_is_symmetric_under_sign_flips() {
        let mut rng = master_rng(55);
        for _ in 0..20 {
            let u = UnitVector::sample_uniform(7, &mut rng).unwrap();
            let v = UnitVector::sample_uniform(7, &mut rng).unwrap();
            let flipped: Vec<f64> = v.as_slice().iter().map(|c| -c).collect();
            assert_eq!(
                folded_euclidean_dist(v.as_slice(), u.as_slice()),
                folded_euclidean_dist(&flipped, u.as_slice()),
            );
        }
    }

    fn smoke_spec() -> SweepSpec {
        SweepSpec {
            function: BenchmarkFn::Ackley,
            dim: 3,
            rotate_angle: 0.0,
            params: SolverParams {
                sigma: 1.0,
                dt: 0.01,
                n_agents: 10,
                batch_size: 6,
                n_min: 2,
                max_iter: 150,
                n_stall: 30,
                seed: 9,
                ..SolverParams::default()
            },
            runs: 3,
            xsy_mode: XsyMode::Frozen,
            gkv: None,
        }
    }

    #[test]
    fn benchmark_sweep_aggregates_consistently_and_reproduces() {
        let spec = smoke_spec();
        let rows = benchmark_sweep(std::slice::from_ref(&spec)).unwrap();
        assert_eq!(rows.len(), 1);
        let row = &rows[0];
        assert_eq!(row.function, "ackley");
        assert_eq!(row.runs, 3);
        assert_eq!(row.records.len(), 3);
        assert_eq!(row.stall_count + row.max_iter_count, 3);
        assert!(row.wilson_low <= row.success_rate && row.success_rate <= row.wilson_high);
        assert_eq!(row.successes, row.records.iter().filter(|r| r.success == Some(true)).count());
        if row.successes == 0 {
            assert!(row.mean_error.is_none());
        } else {
            assert!(row.mean_error.unwrap().is_finite());
        }
        for (i, record) in row.records.iter().enumerate() {
            assert_eq!(record.run_index, i);
            assert!(record.iterations <= 150);
            assert!(record.avg_agents <= 10.0 && record.avg_agents >= 2.0);
        }
        // Distinct runs get distinct derived seeds.
        assert_ne!(row.records[0].seed, row.records[1].seed);

        let again = benchmark_sweep(std::slice::from_ref(&spec)).unwrap();
        assert_eq!(rows, again);
    }

    #[test]
    fn sweep_rejects_zero_runs_and_bad_angles() {
        let mut spec = smoke_spec();
        spec.runs = 0;
        assert!(benchmark_sweep(std::slice::from_ref(&spec)).is_err());

        let mut spec = smoke_spec();
        spec.rotate_angle = -0.5;
        assert!(benchmark_sweep(std::slice::from_ref(&spec)).is_err());
    }

    #[test]
    fn robust_pca_experiment_reproduces_and_validates_fractions() {
        let solver = SolverParams {
            sigma: 1.0,
            dt: 0.1,
            n_agents: 12,
            batch_size: 6,
            n_min: 2,
            max_iter: 120,
            n_stall: 25,
            seed: 31,
            ..SolverParams::default()
        };
        let cells = robust_pca_experiment(4, 40, &[0.0, 0.5], 1.0, &solver, 2, None).unwrap();
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[0].inliers, 40);
        assert_eq!(cells[0].outliers, 0);
        assert_eq!(cells[1].inliers, 20);
        assert_eq!(cells[1].outliers, 20);
        for cell in &cells {
            assert_eq!(cell.errors.len(), 2);
            assert!(cell.errors.iter().all(|e| e.is_finite() && *e >= 0.0));
            // The folded metric can reach at most the diameter of the sphere.
            assert!(cell.errors.iter().all(|e| *e <= 2.0 + 1e-12));
            assert!(cell.mean_error.is_finite());
        }
        let again = robust_pca_experiment(4, 40, &[0.0, 0.5], 1.0, &solver, 2, None).unwrap();
        assert_eq!(cells, again);

        let bad = robust_pca_experiment(4, 40, &[1.0], 1.0, &solver, 2, None);
        assert!(bad.is_err(), "fraction 1.0 leaves no inliers");
        let bad = robust_pca_experiment(4, 40, &[-0.1], 1.0, &solver, 2, None);
        assert!(bad.is_err());
    }

    #[test]
    fn phase_retrieval_curve_reproduces_and_propagates_bad_frames() {
        let solver = SolverParams {
            sigma: 1.0,
            dt: 0.3,
            alpha: f64::INFINITY,
            n_agents: 20,
            batch_size: 10,
            mu: 0.0,
            n_min: 2,
            max_iter: 150,
            n_stall: 30,
            seed: 77,
            ..SolverParams::default()
        };
        let cells = phase_retrieval_curve(4, &[2, 40], &solver, 2).unwrap();
        assert_eq!(cells.len(), 2);
        for cell in &cells {
            assert_eq!(cell.runs, 2);
            assert!(cell.wilson_low <= cell.success_rate && cell.success_rate <= cell.wilson_high);
        }
        let again = phase_retrieval_curve(4, &[2, 40], &solver, 2).unwrap();
        assert_eq!(cells, again);

        assert!(phase_retrieval_curve(4, &[], &solver, 2).is_err());
        assert!(phase_retrieval_curve(4, &[0], &solver, 2).is_err(), "empty frame propagates");
    }

    #[test]
    fn fuzz_keeps_agents_on_the_sphere_and_noise_tangent() {
        let report = sphere_invariant_fuzz(200, 61).unwrap();
        assert_eq!(report.cases, 200);
        assert!(report.max_norm_error <= 1e-12, "norm error {:.3e}", report.max_norm_error);
        assert!(
            report.max_tangency_error <= 1e-12,
            "tangency error {:.3e}",
            report.max_tangency_error
        );
    }

    #[test]
    fn property_suite_passes_every_line() {
        let reports = property_suite(62).unwrap();
        assert_eq!(reports.len(), 6);
        for report in &reports {
            assert!(
                report.pass,
                "{}: worst {:.3e} exceeds bound {:.3e}",
                report.name, report.worst, report.bound
            );
        }
        // Reproducible with the same seed.
        assert_eq!(property_suite(62).unwrap(), reports);
    }
}
