//! Phase retrieval: recover a direction from squared frame measurements.
//!
//! Given frame vectors `a_i` and intensities `y_i = <v*, a_i>^2`, the
//! empirical risk `E(v) = (1/M_f) sum_i (<v, a_i>^2 - y_i)^2` vanishes
//! exactly at `±v*`; the sign is fundamentally unrecoverable, so the
//! objective is marked even and success metrics fold it.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Objective;
use crate::error::{CboError, Result};
use crate::sphere::{dot, UnitVector};

/// A measurement frame: vectors `a_i`, intensities `y_i`, and the ground
/// truth that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    dim: usize,
    /// Flat row-major frame vectors (`len * dim` floats).
    vectors: Vec<f64>,
    /// Noiseless intensities `y_i = <truth, a_i>^2`.
    measurements: Vec<f64>,
    truth: UnitVector,
}

impl Frame {
    /// Number of measurements `M_f`.
    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    /// Always false: construction requires at least one measurement.
    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    /// Ambient dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Frame vector `a_i`.
    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// Intensity `y_i`.
    pub fn measurement(&self, i: usize) -> f64 {
        self.measurements[i]
    }

    /// The direction the intensities were generated from.
    pub fn truth(&self) -> &UnitVector {
        &self.truth
    }
}

/// Draw a Gaussian frame of `count` vectors `a_i ~ N(0, I_d)` and record the
/// noiseless intensities of `truth`.
pub fn gaussian_frame(
    dim: usize,
    count: usize,
    truth: &UnitVector,
    rng: &mut ChaCha8Rng,
) -> Result<Frame> {
    if truth.dim() != dim {
        return Err(CboError::DimensionMismatch {
            context: "frame truth direction",
            expected: dim,
            found: truth.dim(),
        });
    }
    if count == 0 {
        return Err(CboError::InvalidParameter {
            name: "count",
            value: count.to_string(),
            constraint: "a frame needs at least one measurement vector",
        });
    }
    let mut vectors = Vec::with_capacity(count * dim);
    let mut measurements = Vec::with_capacity(count);
    for _ in 0..count {
        let start = vectors.len();
        for _ in 0..dim {
            vectors.push(StandardNormal.sample(rng));
        }
        let inner = dot(&vectors[start..], truth.as_slice());
        measurements.push(inner * inner);
    }
    Ok(Frame { dim, vectors, measurements, truth: truth.clone() })
}

/// The empirical risk `E(v) = (1/M_f) sum_i (<v, a_i>^2 - y_i)^2`, with its
/// analytic ambient gradient `(4/M_f) sum_i (<v, a_i>^2 - y_i) <v, a_i> a_i`.
pub fn phase_retrieval_risk(frame: &Frame) -> Objective {
    let frame = Arc::new(frame.clone());
    let dim = frame.dim();
    let count = frame.len() as f64;

    let eval_frame = Arc::clone(&frame);
    let eval = move |v: &[f64]| {
        let mut sum = 0.0;
        for i in 0..eval_frame.len() {
            let inner = dot(eval_frame.vector(i), v);
            let gap = inner * inner - eval_frame.measurement(i);
            sum += gap * gap;
        }
        sum / count
    };

    let grad_frame = Arc::clone(&frame);
    let gradient = move |v: &[f64]| {
        let mut g = vec![0.0; v.len()];
        for i in 0..grad_frame.len() {
            let a = grad_frame.vector(i);
            let inner = dot(a, v);
            let coeff = 4.0 * (inner * inner - grad_frame.measurement(i)) * inner / count;
            for (gk, ak) in g.iter_mut().zip(a) {
                *gk += coeff * ak;
            }
        }
        g
    };

    Objective::new("phase-retrieval", dim, eval)
        .with_minimizer(frame.truth().clone(), 0.0)
        .with_gradient(gradient)
        .with_even_symmetry()
}
