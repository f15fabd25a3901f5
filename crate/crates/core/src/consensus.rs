//! The softmin-weighted consensus point and batch selection.
//!
//! The consensus point of an ensemble under objective values `E_j` is the
//! weighted mean `v_alpha = sum_j w_j V_j / sum_j w_j` with `w_j =
//! exp(-alpha E_j)`. Computed literally this under/overflows for the large
//! `alpha` the method needs, so the weights are always stabilized by
//! subtracting the minimum value first: the best agent then contributes
//! weight exactly 1 and the denominator never leaves `[1, N]`. The point is
//! a convex combination of unit vectors and generally lies inside the ball,
//! not on the sphere — it is used as-is, never renormalized.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{CboError, Result};
use crate::sphere::Ensemble;

/// The weighted consensus of an ensemble, with bookkeeping about the best
/// agent that anchored the weight stabilization.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConsensusPoint {
    /// The weighted mean (inside the unit ball; `|point| <= 1 + 1e-12`).
    pub point: Vec<f64>,
    /// Index of the agent with the smallest objective value (ties broken by
    /// lowest index). For a batch consensus this is an index into the full
    /// ensemble, not into the batch.
    pub best_index: usize,
    /// Objective value at the best agent.
    pub best_value: f64,
    /// Sum of the stabilized (unnormalized) weights; always in `[1, N]`.
    pub weight_sum: f64,
}

/// Consensus over the whole ensemble; `values[j]` is the objective value of
/// agent `j`.
///
/// `alpha` must be non-negative; `f64::INFINITY` is the explicit sentinel
/// selecting the pure best agent.
pub fn consensus_point(e: &Ensemble, values: &[f64], alpha: f64) -> Result<ConsensusPoint> {
    if values.len() != e.len() {
        return Err(CboError::DimensionMismatch {
            context: "consensus values",
            expected: e.len(),
            found: values.len(),
        });
    }
    weighted_consensus(e, values.iter().copied().enumerate(), alpha)
}

/// Consensus over the sub-ensemble `indices`; `values[k]` is the objective
/// value of agent `indices[k]`. Weights are stabilized at the batch-best
/// agent. With `indices = 0..N` this reproduces [`consensus_point`] bit for
/// bit.
pub fn consensus_point_batch(
    e: &Ensemble,
    indices: &[usize],
    values: &[f64],
    alpha: f64,
) -> Result<ConsensusPoint> {
    if values.len() != indices.len() {
        return Err(CboError::DimensionMismatch {
            context: "batch consensus values",
            expected: indices.len(),
            found: values.len(),
        });
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= e.len()) {
        return Err(CboError::InvalidParameter {
            name: "indices",
            value: bad.to_string(),
            constraint: "batch indices must address ensemble agents",
        });
    }
    weighted_consensus(e, indices.iter().copied().zip(values.iter().copied()), alpha)
}

fn weighted_consensus<I>(e: &Ensemble, pairs: I, alpha: f64) -> Result<ConsensusPoint>
where
    I: Iterator<Item = (usize, f64)> + Clone,
{
    validate_alpha(alpha)?;
    let (best_index, best_value) = argmin(pairs.clone())?;

    if alpha.is_infinite() {
        return Ok(ConsensusPoint {
            point: e.agent(best_index).to_vec(),
            best_index,
            best_value,
            weight_sum: 1.0,
        });
    }

    let mut point = vec![0.0; e.dim()];
    let mut weight_sum = 0.0;
    for (i, value) in pairs {
        // exp(-alpha (E_j - E_min)) <= 1, and = 1 at the best agent, so the
        // sum stays in [1, N] for any finite alpha.
        let w = (-alpha * (value - best_value)).exp();
        weight_sum += w;
        for (acc, x) in point.iter_mut().zip(e.agent(i)) {
            *acc += w * x;
        }
    }
    for x in point.iter_mut() {
        *x /= weight_sum;
    }
    Ok(ConsensusPoint { point, best_index, best_value, weight_sum })
}

/// Normalized softmin weights `exp(-alpha E_j) / sum_k exp(-alpha E_k)`,
/// stabilized like the consensus computation; with `alpha = INFINITY` the
/// result is one-hot at the argmin.
pub fn softmin_weights(values: &[f64], alpha: f64) -> Result<Vec<f64>> {
    validate_alpha(alpha)?;
    let (best_index, best_value) = argmin(values.iter().copied().enumerate())?;
    if alpha.is_infinite() {
        let mut w = vec![0.0; values.len()];
        w[best_index] = 1.0;
        return Ok(w);
    }
    let raw: Vec<f64> = values.iter().map(|&v| (-alpha * (v - best_value)).exp()).collect();
    let sum: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / sum).collect())
}

fn validate_alpha(alpha: f64) -> Result<()> {
    if alpha.is_nan() || alpha < 0.0 {
        return Err(CboError::InvalidParameter {
            name: "alpha",
            value: format!("{alpha}"),
            constraint: "the weight exponent must be non-negative (or +inf for pure argmin)",
        });
    }
    Ok(())
}

/// Minimum value and its lowest index; rejects empty input and non-finite
/// values (a NaN weight would silently poison the whole consensus).
fn argmin<I>(pairs: I) -> Result<(usize, f64)>
where
    I: Iterator<Item = (usize, f64)>,
{
    let mut best: Option<(usize, f64)> = None;
    for (i, value) in pairs {
        if !value.is_finite() {
            return Err(CboError::NonFinite {
                context: format!("objective value {value} for agent {i}"),
            });
        }
        match best {
            Some((_, b)) if value >= b => {}
            _ => best = Some((i, value)),
        }
    }
    best.ok_or(CboError::EmptyInput { context: "consensus" })
}

/// Draw `m` distinct agent indices uniformly from `0..n` (partial
/// Fisher–Yates), returned sorted ascending so downstream reductions are
/// order-canonical. `m > n` is clamped to `n` — the run loop falls back to
/// full consensus when discarding shrinks the ensemble below the batch size.
pub fn select_batch(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if n == 0 || m == 0 {
        return Err(CboError::InvalidParameter {
            name: "batch_size",
            value: format!("{m} of {n}"),
            constraint: "batch selection needs at least one agent and batch size 1 or more",
        });
    }
    let m = m.min(n);
    let mut indices: Vec<usize> = (0..n).collect();
    for i in 0..m {
        let j = rng.gen_range(i..n);
        indices.swap(i, j);
    }
    indices.truncate(m);
    indices.sort_unstable();
    Ok(indices)
}

/// Partition `0..n` into `n / m` disjoint batches of size `m` by a random
/// permutation. Each batch is sorted ascending. Errors unless `m` divides
/// `n` evenly.
pub fn partition_batches(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<usize>>> {
    if n == 0 || m == 0 || n % m != 0 {
        return Err(CboError::InvalidParameter {
            name: "batch_size",
            value: format!("{m} of {n}"),
            constraint: "disjoint partitioning requires a batch size that divides the agent count",
        });
    }
    let mut indices: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
    Ok(indices
        .chunks_exact(m)
        .map(|chunk| {
            let mut batch = chunk.to_vec();
            batch.sort_unstable();
            batch
        })
        .collect())
}
