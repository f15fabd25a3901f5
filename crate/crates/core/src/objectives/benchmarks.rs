//! Classical multi-modal benchmark functions with a placeable minimizer.
//!
//! Each function is written exactly in its standard scaled form, expressed in
//! the displacement `D = v - v*` from the global minimizer `v*`, so the
//! minimizer can be placed anywhere on the sphere (by default the last
//! coordinate axis, optionally rotated into the `(e_1, e_d)` plane). Every
//! function attains the value 0 at `v*`.

use rand::Rng;

use super::Objective;
use crate::error::{CboError, Result};
use crate::rng::{hash_coords, master_rng, mix64};
use crate::sphere::UnitVector;

use std::f64::consts::PI;

/// The six benchmark functions, in a fixed presentation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BenchmarkFn {
    /// Nearly flat outer region with a deep central hole; many local minima.
    Ackley,
    /// Highly multi-modal with regularly spaced local minima.
    Rastrigin,
    /// Non-separable, huge number of regularly distributed local minima.
    Griewank,
    /// Ridge rings around the minimizer; narrow global basin.
    Salomon,
    /// Non-differentiable, several local minima.
    Alpine,
    /// Random coefficients redrawn per evaluation; non-differentiable.
    XsyRandom,
}

impl BenchmarkFn {
    /// All functions in presentation order.
    pub const ALL: [BenchmarkFn; 6] = [
        BenchmarkFn::Ackley,
        BenchmarkFn::Rastrigin,
        BenchmarkFn::Griewank,
        BenchmarkFn::Salomon,
        BenchmarkFn::Alpine,
        BenchmarkFn::XsyRandom,
    ];

    /// Stable lowercase label used in tables, CSV output, and the CLI.
    pub fn name(self) -> &'static str {
        match self {
            BenchmarkFn::Ackley => "ackley",
            BenchmarkFn::Rastrigin => "rastrigin",
            BenchmarkFn::Griewank => "griewank",
            BenchmarkFn::Salomon => "salomon",
            BenchmarkFn::Alpine => "alpine",
            BenchmarkFn::XsyRandom => "xsy-random",
        }
    }

    /// Build the objective with minimizer `v*`.
    ///
    /// `seed` and `mode` configure the XSY random coefficients and are
    /// ignored by the five deterministic functions.
    pub fn objective(self, minimizer: &UnitVector, mode: XsyMode, seed: u64) -> Objective {
        match self {
            BenchmarkFn::Ackley => ackley(minimizer),
            BenchmarkFn::Rastrigin => rastrigin(minimizer),
            BenchmarkFn::Griewank => griewank(minimizer),
            BenchmarkFn::Salomon => salomon(minimizer),
            BenchmarkFn::Alpine => alpine(minimizer),
            BenchmarkFn::XsyRandom => xsy_random(minimizer, mode, seed),
        }
    }
}

impl std::fmt::Display for BenchmarkFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for BenchmarkFn {
    type Err = CboError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ackley" => Ok(BenchmarkFn::Ackley),
            "rastrigin" => Ok(BenchmarkFn::Rastrigin),
            "griewank" => Ok(BenchmarkFn::Griewank),
            "salomon" => Ok(BenchmarkFn::Salomon),
            "alpine" => Ok(BenchmarkFn::Alpine),
            "xsy-random" | "xsy_random" | "xsy" => Ok(BenchmarkFn::XsyRandom),
            other => Err(CboError::InvalidParameter {
                name: "function",
                value: other.to_string(),
                constraint: "one of ackley, rastrigin, griewank, salomon, alpine, xsy-random",
            }),
        }
    }
}

/// How the XSY random coefficients are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum XsyMode {
    /// Draw the coefficients once at construction; the landscape is then a
    /// fixed deterministic function.
    Frozen,
    /// Redraw the coefficients at every evaluation from a counter-based
    /// stream keyed on the evaluation context, making the objective
    /// stochastic (its literal reading) while staying reproducible.
    PerEvaluation,
}

/// The minimizer `e_d` rotated by `angle` (radians) in the `(e_1, e_d)`
/// plane: `v* = sin(angle) e_1 + cos(angle) e_d`.
pub fn rotated_minimizer(dim: usize, angle: f64) -> Result<UnitVector> {
    if !(0.0..=PI).contains(&angle) {
        return Err(CboError::InvalidParameter {
            name: "angle",
            value: format!("{angle}"),
            constraint: "rotation angle must lie in [0, pi]",
        });
    }
    let mut v = vec![0.0; dim.max(2)];
    v[0] = angle.sin();
    let last = v.len() - 1;
    v[last] = angle.cos();
    UnitVector::normalized(&v)
}

/// Ackley: `-A exp(-(a b / sqrt(d)) |D|) - exp((1/d) sum_k cos(2 pi b D_k)) + e + B`
/// with `A = 20`, `a = 0.2`, `b = 32`, `B = 20`.
pub fn ackley(minimizer: &UnitVector) -> Objective {
    const AMPLITUDE: f64 = 20.0; // A
    const DECAY: f64 = 0.2; // a
    const FREQ: f64 = 32.0; // b
    const OFFSET: f64 = 20.0; // B
    let vstar = minimizer.clone();
    let d = vstar.dim();
    let eval = move |v: &[f64]| {
        let (dist_sq, cos_sum) = displacement_moments(v, vstar.as_slice(), 2.0 * PI * FREQ);
        -AMPLITUDE * (-DECAY * FREQ / (d as f64).sqrt() * dist_sq.sqrt()).exp()
            - (cos_sum / d as f64).exp()
            + std::f64::consts::E
            + OFFSET
    };
    Objective::new("ackley", d, eval).with_minimizer(minimizer.clone(), 0.0)
}

/// Rastrigin: `(b^2/d) |D|^2 - (A/d) sum_k cos(2 pi b D_k) + B`
/// with `A = 10`, `b = 5.12`, `B = 10`.
pub fn rastrigin(minimizer: &UnitVector) -> Objective {
    const AMPLITUDE: f64 = 10.0; // A
    const FREQ: f64 = 5.12; // b
    const OFFSET: f64 = 10.0; // B
    let vstar = minimizer.clone();
    let d = vstar.dim();
    let eval = move |v: &[f64]| {
        let (dist_sq, cos_sum) = displacement_moments(v, vstar.as_slice(), 2.0 * PI * FREQ);
        FREQ * FREQ / d as f64 * dist_sq - AMPLITUDE / d as f64 * cos_sum + OFFSET
    };
    Objective::new("rastrigin", d, eval).with_minimizer(minimizer.clone(), 0.0)
}

/// Griewank: `A b^2 |D|^2 - prod_k cos(b D_k / sqrt(k)) + B`
/// with `A = 1/4000`, `b = 600`, `B = 1` (`k` is the 1-based coordinate).
pub fn griewank(minimizer: &UnitVector) -> Objective {
    const SCALE: f64 = 1.0 / 4000.0; // A
    const FREQ: f64 = 600.0; // b
    const OFFSET: f64 = 1.0; // B
    let vstar = minimizer.clone();
    let d = vstar.dim();
    let eval = move |v: &[f64]| {
        assert_eq!(v.len(), vstar.dim(), "evaluation point dimension mismatch");
        let mut dist_sq = 0.0;
        let mut product = 1.0;
        for (k, (x, m)) in v.iter().zip(vstar.as_slice()).enumerate() {
            let diff = x - m;
            dist_sq += diff * diff;
            product *= (FREQ * diff / ((k + 1) as f64).sqrt()).cos();
        }
        SCALE * FREQ * FREQ * dist_sq - product + OFFSET
    };
    Objective::new("griewank", d, eval).with_minimizer(minimizer.clone(), 0.0)
}

/// Salomon: `A cos(2 pi b |D|) + a b |D| + B`
/// with `a = 0.1`, `b = 100`, `A = -1`, `B = 1`.
pub fn salomon(minimizer: &UnitVector) -> Objective {
    const SLOPE: f64 = 0.1; // a
    const FREQ: f64 = 100.0; // b
    const AMPLITUDE: f64 = -1.0; // A
    const OFFSET: f64 = 1.0; // B
    let vstar = minimizer.clone();
    let d = vstar.dim();
    let eval = move |v: &[f64]| {
        let dist = crate::sphere::euclidean_dist(v, vstar.as_slice());
        AMPLITUDE * (2.0 * PI * FREQ * dist).cos() + SLOPE * FREQ * dist + OFFSET
    };
    Objective::new("salomon", d, eval).with_minimizer(minimizer.clone(), 0.0)
}

/// Alpine: `b sum_k |D_k sin(b D_k) - a D_k|` with `a = 0.1`, `b = 10`.
pub fn alpine(minimizer: &UnitVector) -> Objective {
    const SLOPE: f64 = 0.1; // a
    const FREQ: f64 = 10.0; // b
    let vstar = minimizer.clone();
    let d = vstar.dim();
    let eval = move |v: &[f64]| {
        assert_eq!(v.len(), vstar.dim(), "evaluation point dimension mismatch");
        let sum: f64 = v
            .iter()
            .zip(vstar.as_slice())
            .map(|(x, m)| {
                let diff = x - m;
                (diff * (FREQ * diff).sin() - SLOPE * diff).abs()
            })
            .sum();
        FREQ * sum
    };
    Objective::new("alpine", d, eval).with_minimizer(minimizer.clone(), 0.0)
}

/// XSY random: `sum_k xi_k |b D_k|^k` with `b = 5`, `xi_k ~ U[0,1]`, and `k`
/// the 1-based coordinate index.
///
/// In [`XsyMode::PerEvaluation`] the coefficients are redrawn at every call
/// from a stream keyed on `(seed, agent, iteration)` — or on the coordinate
/// bits when no context is available — so the objective is stochastic in the
/// sense that re-querying a point in a new context gives a new draw, yet any
/// fixed query is reproducible. [`XsyMode::Frozen`] draws `xi` once here.
pub fn xsy_random(minimizer: &UnitVector, mode: XsyMode, seed: u64) -> Objective {
    const SCALE: f64 = 5.0; // b
    let d = minimizer.dim();
    let obj = match mode {
        XsyMode::Frozen => {
            let mut rng = master_rng(seed);
            let xi: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
            let vstar = minimizer.clone();
            Objective::new("xsy-random", d, move |v: &[f64]| {
                xsy_value(v, vstar.as_slice(), SCALE, &xi)
            })
        }
        XsyMode::PerEvaluation => {
            let vstar = minimizer.clone();
            let vstar_ctx = minimizer.clone();
            Objective::new("xsy-random", d, move |v: &[f64]| {
                let mut rng = master_rng(hash_coords(seed, v));
                let xi: Vec<f64> = (0..v.len()).map(|_| rng.gen::<f64>()).collect();
                xsy_value(v, vstar.as_slice(), SCALE, &xi)
            })
            .with_contextual_eval(move |v: &[f64], agent: u64, iteration: u64| {
                let mut rng = master_rng(mix64(seed, mix64(agent, iteration)));
                let xi: Vec<f64> = (0..v.len()).map(|_| rng.gen::<f64>()).collect();
                xsy_value(v, vstar_ctx.as_slice(), SCALE, &xi)
            })
        }
    };
    obj.with_minimizer(minimizer.clone(), 0.0)
}

fn xsy_value(v: &[f64], vstar: &[f64], b: f64, xi: &[f64]) -> f64 {
    assert_eq!(v.len(), vstar.len(), "evaluation point dimension mismatch");
    v.iter()
        .zip(vstar)
        .zip(xi)
        .enumerate()
        .map(|(k, ((x, m), coeff))| coeff * (b * (x - m)).abs().powi(k as i32 + 1))
        .sum()
}

/// Squared displacement norm and `sum_k cos(omega D_k)` in one pass.
fn displacement_moments(v: &[f64], vstar: &[f64], omega: f64) -> (f64, f64) {
    assert_eq!(v.len(), vstar.len(), "evaluation point dimension mismatch");
    let mut dist_sq = 0.0;
    let mut cos_sum = 0.0;
    for (x, m) in v.iter().zip(vstar) {
        let diff = x - m;
        dist_sq += diff * diff;
        cos_sum += (omega * diff).cos();
    }
    (dist_sq, cos_sum)
}
