//! Projected Euler–Maruyama steppers and the full optimization loop.
//!
//! One iteration moves every agent toward the consensus point with drift
//! `Δt λ P(V)v_α`, adds projected noise (componentwise `F ⊙ ΔB` in the
//! anisotropic mode, `|F| ΔB` in the isotropic mode, `F = V − v_α`),
//! subtracts the Itô correction of the corresponding SDE, and renormalizes
//! back onto the sphere. The loop around the steppers draws objective
//! values over a random batch, recenters the softmin weights at the batch
//! best, periodically discards agents as the ensemble variance decays, and
//! stops on a stall (consensus movement below `delta_stall` for `n_stall`
//! consecutive iterations) or at the iteration cap.
//!
//! All randomness in a run comes from one counter-seeded stream in a fixed
//! order per iteration — injected gradient agent, batch selection, noise in
//! agent order, discard selection — so runs are reproducible from the seed
//! alone and the per-agent work can be parallelized without changing the
//! draws.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::consensus::{consensus_point, consensus_point_batch, select_batch, ConsensusPoint};
use crate::error::{CboError, Result};
use crate::gradient::{gkv_inject, GkvParams};
use crate::objectives::Objective;
use crate::rng::master_rng;
use crate::sphere::{
    euclidean_dist, folded_sup_dist, norm, sup_dist, Ensemble, UnitVector, DEGENERATE_NORM,
};

/// A run succeeds when the final consensus is within this sup-norm distance
/// of the known minimizer.
pub const SUCCESS_TOLERANCE: f64 = 0.05;

/// Shape of the stochastic term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseMode {
    /// Componentwise noise `σ P(V)(F ⊙ ΔB)`: exploration shuts down
    /// coordinate by coordinate as agents align with the consensus.
    #[serde(rename = "aniso")]
    Anisotropic,
    /// Scalar-amplitude noise `σ |F| P(V)ΔB`.
    #[serde(rename = "iso")]
    Isotropic,
}

impl fmt::Display for NoiseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseMode::Anisotropic => "aniso",
            NoiseMode::Isotropic => "iso",
        })
    }
}

impl FromStr for NoiseMode {
    type Err = CboError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aniso" | "anisotropic" => Ok(NoiseMode::Anisotropic),
            "iso" | "isotropic" => Ok(NoiseMode::Isotropic),
            _ => Err(CboError::InvalidParameter {
                name: "noise",
                value: s.to_string(),
                constraint: "must be one of: aniso, iso",
            }),
        }
    }
}

/// Serde representation of the weight exponent: a plain number when
/// finite, the string `"inf"` at infinity (JSON cannot express the latter
/// natively, and silently emitting `null` would corrupt config echoes).
mod alpha_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_infinite() && *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*x)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(x),
            Raw::Text(t) => {
                let lowered = t.trim().to_ascii_lowercase();
                if matches!(lowered.as_str(), "inf" | "+inf" | "infinity") {
                    Ok(f64::INFINITY)
                } else {
                    lowered.parse::<f64>().map_err(serde::de::Error::custom)
                }
            }
        }
    }
}

/// Every scalar knob of a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    /// Drift rate toward the consensus point.
    pub lambda: f64,
    /// Noise intensity.
    pub sigma: f64,
    /// Time step.
    pub dt: f64,
    /// Weight exponent; `f64::INFINITY` selects the pure batch best.
    /// Serialized as the string `"inf"` in that case, since JSON has no
    /// infinity literal.
    #[serde(with = "alpha_serde")]
    pub alpha: f64,
    /// Initial number of agents.
    pub n_agents: usize,
    /// Batch size for the consensus evaluation.
    pub batch_size: usize,
    /// Discard aggressiveness in `[0, 1]`; 0 disables discarding.
    pub mu: f64,
    /// Agent count never drops below this.
    pub n_min: usize,
    /// Iteration cap.
    pub max_iter: u64,
    /// Consecutive low-movement iterations that constitute a stall.
    pub n_stall: u64,
    /// Movement threshold (Euclidean, strict) for the stall counter.
    pub delta_stall: f64,
    /// Stochastic term shape.
    pub noise_mode: NoiseMode,
    /// Iterations between variance measurements (and discard decisions).
    pub discard_period: u64,
    /// Master seed; every draw of the run derives from it.
    pub seed: u64,
}

impl Default for SolverParams {
    /// Reference configuration: unit drift, weight exponent `5e4`,
    /// anisotropic noise at `σ = 5`, `Δt = 0.0025` (the published
    /// 20-dimensional benchmark column), 100 agents with 60-agent batches,
    /// discard rate 0.1 checked every 10 iterations down to 10 agents, and
    /// the stall rule `1e-4` over 250 iterations with a 20000-iteration cap.
    fn default() -> Self {
        SolverParams {
            lambda: 1.0,
            sigma: 5.0,
            dt: 0.0025,
            alpha: 5e4,
            n_agents: 100,
            batch_size: 60,
            mu: 0.1,
            n_min: 10,
            max_iter: 20_000,
            n_stall: 250,
            delta_stall: 1e-4,
            noise_mode: NoiseMode::Anisotropic,
            discard_period: 10,
            seed: 0,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        fn bad(name: &'static str, value: String, constraint: &'static str) -> CboError {
            CboError::InvalidParameter { name, value, constraint }
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(bad("lambda", format!("{}", self.lambda), "drift rate must be positive and finite"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(bad("sigma", format!("{}", self.sigma), "noise intensity must be non-negative and finite"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(bad("dt", format!("{}", self.dt), "time step must be positive and finite"));
        }
        if self.alpha.is_nan() || self.alpha < 0.0 {
            return Err(bad("alpha", format!("{}", self.alpha), "weight exponent must be non-negative (or +inf)"));
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(bad("mu", format!("{}", self.mu), "discard aggressiveness must lie in [0, 1]"));
        }
        if self.n_min < 1 || self.n_min > self.n_agents {
            return Err(bad("n_min", format!("{}", self.n_min), "minimum agent count must lie in [1, n_agents]"));
        }
        if self.batch_size < 1 || self.batch_size > self.n_agents {
            return Err(bad("batch_size", format!("{}", self.batch_size), "batch size must lie in [1, n_agents]"));
        }
        if self.max_iter < 1 {
            return Err(bad("max_iter", format!("{}", self.max_iter), "at least one iteration is required"));
        }
        if self.n_stall < 1 {
            return Err(bad("n_stall", format!("{}", self.n_stall), "the stall window must be at least 1"));
        }
        if !(self.delta_stall > 0.0 && self.delta_stall.is_finite()) {
            return Err(bad("delta_stall", format!("{}", self.delta_stall), "the stall tolerance must be positive and finite"));
        }
        if self.discard_period < 1 {
            return Err(bad("discard_period", format!("{}", self.discard_period), "the variance check period must be at least 1"));
        }
        Ok(())
    }
}

/// How the initial ensemble is produced.
#[derive(Clone, Debug)]
pub enum InitMode {
    /// Uniform on the sphere.
    Uniform,
    /// Concentrated around `mu` with the given concentration.
    VonMisesFisher { mu: UnitVector, kappa: f64 },
    /// Caller-supplied agents; the count must equal `n_agents`.
    Explicit(Ensemble),
}

/// Why a run stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StopReason {
    #[serde(rename = "stall")]
    Stall,
    #[serde(rename = "max-iter")]
    MaxIter,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Stall => "stall",
            StopReason::MaxIter => "max-iter",
        })
    }
}

/// Optional run machinery beyond the plain loop.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Inject gradient descent steps with these parameters.
    pub gkv: Option<GkvParams>,
    /// Record the consensus point every this many iterations.
    pub trace_every: Option<u64>,
    /// Record the ensemble variance at every measurement boundary.
    pub record_variance: bool,
}

/// Outcome of one run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    /// Consensus at the stopping iteration, exactly as used (not
    /// renormalized); success is judged on this raw point.
    pub final_consensus: ConsensusPoint,
    /// Loop passes executed (at most `max_iter`).
    pub iterations: u64,
    /// Whether the final consensus is within [`SUCCESS_TOLERANCE`] of the
    /// objective's known minimizer (sign-folded for even objectives);
    /// `None` when the objective has no known minimizer.
    pub success: Option<bool>,
    /// The sup-norm distance behind `success`.
    pub sup_error: Option<f64>,
    /// Time average of the active agent count.
    pub avg_agents: f64,
    /// Objective evaluations spent, including injected gradient steps.
    pub objective_evals: u64,
    pub stop_reason: StopReason,
    /// `(iteration, consensus point)` samples when tracing was requested.
    pub consensus_trace: Option<Vec<(u64, Vec<f64>)>>,
    /// `(iteration, variance)` samples when recording was requested; the
    /// entry at iteration 0 is the initial ensemble's variance.
    pub variance_trace: Option<Vec<(u64, f64)>>,
}

/// One anisotropic step of every agent toward `vcons`, drawing the Gaussian
/// increments internally (variance `dt` per component, agent order).
pub fn step_anisotropic(
    e: &mut Ensemble,
    vcons: &ConsensusPoint,
    p: &SolverParams,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let db = draw_noise(e.len() * e.dim(), p.dt, rng);
    step_anisotropic_with_noise(e, vcons, p, &db)
}

/// One isotropic step of every agent toward `vcons`, drawing increments
/// internally.
pub fn step_isotropic(
    e: &mut Ensemble,
    vcons: &ConsensusPoint,
    p: &SolverParams,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let db = draw_noise(e.len() * e.dim(), p.dt, rng);
    step_isotropic_with_noise(e, vcons, p, &db)
}

/// Gaussian increments with variance `dt`, one per agent coordinate.
pub fn draw_noise(len: usize, dt: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let scale = dt.sqrt();
    (0..len).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect()
}

/// Anisotropic step with externally supplied increments `db` (flat, agent
/// major, length `N·d`, each component `~ N(0, dt)`). Exposed so tests can
/// drive both modes, or differently scaled parameter sets, with one stream.
pub fn step_anisotropic_with_noise(
    e: &mut Ensemble,
    vcons: &ConsensusPoint,
    p: &SolverParams,
    db: &[f64],
) -> Result<()> {
    step_with_noise(e, vcons, p, db, NoiseMode::Anisotropic)
}

/// Isotropic counterpart of [`step_anisotropic_with_noise`].
pub fn step_isotropic_with_noise(
    e: &mut Ensemble,
    vcons: &ConsensusPoint,
    p: &SolverParams,
    db: &[f64],
) -> Result<()> {
    step_with_noise(e, vcons, p, db, NoiseMode::Isotropic)
}

/// The projected stochastic increment of one agent before renormalization —
/// `σ P(V)(F ⊙ ΔB)` (anisotropic) or `σ |F| P(V)ΔB` (isotropic) — isolated
/// with the same arithmetic the steppers use, so tangency can be asserted
/// on exactly what a step adds.
pub fn noise_increment(v: &[f64], vcons: &[f64], p: &SolverParams, db: &[f64]) -> Vec<f64> {
    let d = v.len();
    let mut out = vec![0.0; d];
    match p.noise_mode {
        NoiseMode::Anisotropic => {
            let mut w_dot_v = 0.0;
            for k in 0..d {
                w_dot_v += (v[k] - vcons[k]) * db[k] * v[k];
            }
            for k in 0..d {
                out[k] = p.sigma * ((v[k] - vcons[k]) * db[k] - w_dot_v * v[k]);
            }
        }
        NoiseMode::Isotropic => {
            let mut b_dot_v = 0.0;
            let mut f_sq = 0.0;
            for k in 0..d {
                b_dot_v += db[k] * v[k];
                let f = v[k] - vcons[k];
                f_sq += f * f;
            }
            let f_norm = f_sq.sqrt();
            for k in 0..d {
                out[k] = p.sigma * f_norm * (db[k] - b_dot_v * v[k]);
            }
        }
    }
    out
}

fn step_with_noise(
    e: &mut Ensemble,
    vcons: &ConsensusPoint,
    p: &SolverParams,
    db: &[f64],
    mode: NoiseMode,
) -> Result<()> {
    let d = e.dim();
    let va = &vcons.point;
    if va.len() != d {
        return Err(CboError::DimensionMismatch {
            context: "consensus point",
            expected: d,
            found: va.len(),
        });
    }
    if db.len() != e.len() * d {
        return Err(CboError::DimensionMismatch {
            context: "noise buffer",
            expected: e.len() * d,
            found: db.len(),
        });
    }

    let half_var_dt = p.dt * p.sigma * p.sigma / 2.0;
    let mut f = vec![0.0; d];
    let mut next = vec![0.0; d];
    for i in 0..e.len() {
        let b = &db[i * d..(i + 1) * d];
        let v = e.agent_mut(i);

        let mut va_dot_v = 0.0;
        for k in 0..d {
            f[k] = v[k] - va[k];
            va_dot_v += va[k] * v[k];
        }

        match mode {
            NoiseMode::Anisotropic => {
                // Noise direction F ⊙ ΔB, projected tangentially.
                let mut w_dot_v = 0.0;
                for k in 0..d {
                    w_dot_v += f[k] * b[k] * v[k];
                }
                // Itô correction (|F|² + D(F)² − 2|D(F)V|²)V with the
                // squared-difference matrix acting componentwise.
                let mut f_sq = 0.0;
                let mut fv_sq = 0.0;
                for k in 0..d {
                    f_sq += f[k] * f[k];
                    fv_sq += f[k] * f[k] * v[k] * v[k];
                }
                for k in 0..d {
                    let drift = p.dt * p.lambda * (va[k] - va_dot_v * v[k]);
                    let noise = p.sigma * (f[k] * b[k] - w_dot_v * v[k]);
                    let correction =
                        half_var_dt * (f_sq * v[k] + f[k] * f[k] * v[k] - 2.0 * fv_sq * v[k]);
                    next[k] = v[k] + drift + noise - correction;
                }
            }
            NoiseMode::Isotropic => {
                let mut b_dot_v = 0.0;
                let mut f_sq = 0.0;
                for k in 0..d {
                    b_dot_v += b[k] * v[k];
                    f_sq += f[k] * f[k];
                }
                let f_norm = f_sq.sqrt();
                let correction_scale = half_var_dt * f_sq * (d as f64 - 1.0);
                for k in 0..d {
                    let drift = p.dt * p.lambda * (va[k] - va_dot_v * v[k]);
                    let noise = p.sigma * f_norm * (b[k] - b_dot_v * v[k]);
                    next[k] = v[k] + drift + noise - correction_scale * v[k];
                }
            }
        }

        let scale = norm(&next);
        if !(scale.is_finite() && scale >= DEGENERATE_NORM) {
            return Err(CboError::DegenerateVector {
                context: format!("agent {i} after one step"),
                norm: scale,
            });
        }
        for k in 0..d {
            v[k] = next[k] / scale;
        }
    }
    Ok(())
}

/// The agent count after one variance measurement: shrink `n` by the factor
/// `1 + mu (sigma_next − sigma_prev) / sigma_prev` (integer part), clamped
/// to `[n_min, n]`. No-ops when `mu = 0`, when the previous variance is not
/// positive (full consensus already), or when the variance grew.
pub fn discard_update(n: usize, sigma_prev: f64, sigma_next: f64, mu: f64, n_min: usize) -> usize {
    if mu == 0.0 || !(sigma_prev > 0.0) || sigma_next > sigma_prev {
        return n;
    }
    let shrink = mu * (sigma_next - sigma_prev) / sigma_prev;
    let candidate = (n as f64 + n as f64 * shrink).floor();
    let clamped = candidate.max(n_min as f64).min(n as f64);
    clamped as usize
}

/// True when the most recent `n_stall` successive consensus movements in
/// `trace` (oldest first) are all strictly below `delta_stall`; requires at
/// least `n_stall + 1` points.
pub fn check_stall(trace: &[Vec<f64>], delta_stall: f64, n_stall: usize) -> bool {
    if n_stall == 0 || trace.len() < n_stall + 1 {
        return false;
    }
    trace[trace.len() - n_stall - 1..]
        .windows(2)
        .all(|w| euclidean_dist(&w[0], &w[1]) < delta_stall)
}

/// Run the full loop with default options.
pub fn run(obj: &Objective, p: &SolverParams, init: &InitMode) -> Result<RunReport> {
    run_with_options(obj, p, init, &RunOptions::default())
}

/// Run the full loop: initialize, then per iteration (optionally) inject a
/// gradient step, select a batch and compute its consensus, test the stall
/// rule, step all agents, and at measurement boundaries discard agents as
/// the variance decays.
pub fn run_with_options(
    obj: &Objective,
    p: &SolverParams,
    init: &InitMode,
    opts: &RunOptions,
) -> Result<RunReport> {
    p.validate()?;
    if let Some(g) = &opts.gkv {
        g.validate()?;
    }
    let d = obj.dim();
    let mut rng = master_rng(p.seed);
    let mut e = match init {
        InitMode::Uniform => Ensemble::sample_uniform(d, p.n_agents, &mut rng)?,
        InitMode::VonMisesFisher { mu, kappa } => {
            if mu.dim() != d {
                return Err(CboError::DimensionMismatch {
                    context: "initialization direction",
                    expected: d,
                    found: mu.dim(),
                });
            }
            Ensemble::sample_vmf(mu, *kappa, p.n_agents, &mut rng)?
        }
        InitMode::Explicit(e0) => {
            if e0.dim() != d {
                return Err(CboError::DimensionMismatch {
                    context: "explicit initial ensemble",
                    expected: d,
                    found: e0.dim(),
                });
            }
            if e0.len() != p.n_agents {
                return Err(CboError::InvalidParameter {
                    name: "n_agents",
                    value: format!("{} agents supplied, {} configured", e0.len(), p.n_agents),
                    constraint: "an explicit initial ensemble must match n_agents",
                });
            }
            e0.clone()
        }
    };

    let mut sigma_prev = e.stats().variance;
    let mut variance_trace = opts.record_variance.then(|| vec![(0u64, sigma_prev)]);
    let mut consensus_trace: Option<Vec<(u64, Vec<f64>)>> = opts.trace_every.map(|_| Vec::new());
    let mut prev_point: Option<Vec<f64>> = None;
    let mut stall_run: u64 = 0;
    let mut evals: u64 = 0;
    let mut agent_iterations: u64 = 0;
    let mut last: Option<ConsensusPoint> = None;
    let mut stop_reason = StopReason::MaxIter;
    let mut iterations = p.max_iter;
    let mut values: Vec<f64> = Vec::with_capacity(p.n_agents);

    for n in 0..p.max_iter {
        if let Some(g) = &opts.gkv {
            if n > 0 && n % g.ell == 0 {
                evals +=
                    gkv_inject(&mut e, obj, g, n, &mut rng).map_err(|err| at_iteration(err, n))?
                        as u64;
            }
        }

        let active = e.len();
        agent_iterations += active as u64;
        let cp = if p.batch_size <= active {
            let batch = select_batch(active, p.batch_size, &mut rng)?;
            values.clear();
            for &j in &batch {
                values.push(obj.eval_at(e.agent(j), j as u64, n));
            }
            evals += batch.len() as u64;
            consensus_point_batch(&e, &batch, &values, p.alpha)
                .map_err(|err| at_iteration(err, n))?
        } else {
            // The ensemble has shrunk below the batch size: full consensus.
            values.clear();
            for (j, row) in e.rows().enumerate() {
                values.push(obj.eval_at(row, j as u64, n));
            }
            evals += active as u64;
            consensus_point(&e, &values, p.alpha).map_err(|err| at_iteration(err, n))?
        };

        if let (Some(every), Some(tr)) = (opts.trace_every, consensus_trace.as_mut()) {
            if every > 0 && n % every == 0 {
                tr.push((n, cp.point.clone()));
            }
        }

        if let Some(prev) = &prev_point {
            if euclidean_dist(prev, &cp.point) < p.delta_stall {
                stall_run += 1;
            } else {
                stall_run = 0;
            }
        }
        prev_point = Some(cp.point.clone());
        let stalled = stall_run >= p.n_stall;
        last = Some(cp);
        if stalled {
            stop_reason = StopReason::Stall;
            iterations = n + 1;
            break;
        }

        let db = draw_noise(active * d, p.dt, &mut rng);
        let cp_ref = last.as_ref().expect("consensus point was just stored");
        step_with_noise(&mut e, cp_ref, p, &db, p.noise_mode)
            .map_err(|err| at_iteration(err, n))?;

        if (n + 1) % p.discard_period == 0 {
            let sigma_next = e.stats().variance;
            if let Some(tr) = variance_trace.as_mut() {
                tr.push((n + 1, sigma_next));
            }
            if p.mu > 0.0 && sigma_prev > 0.0 && sigma_next <= sigma_prev {
                let target = discard_update(e.len(), sigma_prev, sigma_next, p.mu, p.n_min);
                if target < e.len() {
                    let dropped = select_batch(e.len(), e.len() - target, &mut rng)?;
                    e.discard(&dropped)?;
                }
            }
            sigma_prev = sigma_next;
        }
    }

    let final_consensus = last.ok_or(CboError::EmptyInput { context: "run loop" })?;
    let (success, sup_error) = match obj.minimizer() {
        Some(v_star) => {
            let err = if obj.is_even() {
                folded_sup_dist(&final_consensus.point, v_star.as_slice())
            } else {
                sup_dist(&final_consensus.point, v_star.as_slice())
            };
            (Some(err <= SUCCESS_TOLERANCE), Some(err))
        }
        None => (None, None),
    };

    Ok(RunReport {
        final_consensus,
        iterations,
        success,
        sup_error,
        avg_agents: agent_iterations as f64 / iterations as f64,
        objective_evals: evals,
        stop_reason,
        consensus_trace,
        variance_trace,
    })
}

/// Stamp the iteration number onto errors surfaced mid-run.
fn at_iteration(err: CboError, n: u64) -> CboError {
    match err {
        CboError::DegenerateVector { context, norm } => CboError::DegenerateVector {
            context: format!("{context} at iteration {n}"),
            norm,
        },
        CboError::NonFinite { context } => {
            CboError::NonFinite { context: format!("{context} at iteration {n}") }
        }
        other => other,
    }
}
