//! Occasional gradient descent steps injected into the consensus dynamics.
//!
//! Every `ell` iterations one uniformly chosen agent takes a projected
//! gradient step: the ambient gradient of the objective is projected onto
//! the tangent space at the agent, an Armijo backtracking line search picks
//! the step length on the raw (un-renormalized) trial points, and the moved
//! agent is pulled back onto the sphere. Because the gradient is tangential,
//! `|v - h g|^2 = 1 + h^2 |g|^2 >= 1`, so the pull-back can never
//! degenerate. Objectives without an analytic gradient fall back to central
//! finite differences.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CboError, Result};
use crate::objectives::Objective;
use crate::sphere::{norm_sq, project_tangent, Ensemble};

/// Default finite-difference half-step.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// Where ambient gradients come from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum GradientSource {
    /// Use the objective's analytic gradient; errors if it has none.
    Analytic,
    /// Central differences `(E(v + h e_k) - E(v - h e_k)) / 2h`, costing
    /// `2 dim` objective evaluations per gradient.
    CentralDifference { step: f64 },
}

impl GradientSource {
    /// Analytic when the objective provides a gradient, otherwise central
    /// differences at the default step.
    pub fn auto_for(obj: &Objective) -> GradientSource {
        if obj.has_gradient() {
            GradientSource::Analytic
        } else {
            GradientSource::CentralDifference { step: DEFAULT_FD_STEP }
        }
    }
}

/// Parameters of the injected gradient step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GkvParams {
    /// Inject a gradient step every `ell` iterations (at iterations n > 0
    /// with n % ell == 0, before that iteration's batch is drawn).
    pub ell: u64,
    /// Armijo sufficient-decrease constant.
    pub c_armijo: f64,
    /// Backtracking shrink factor.
    pub tau: f64,
    /// Initial trial step.
    pub h0: f64,
    /// Number of shrinks allowed after the initial trial; the candidate
    /// steps are `h0 * tau^k` for `k = 0..=max_backtracks`.
    pub max_backtracks: u32,
    /// Ambient gradient source.
    pub source: GradientSource,
}

impl Default for GkvParams {
    fn default() -> Self {
        GkvParams {
            ell: 10,
            c_armijo: 1e-4,
            tau: 0.5,
            h0: 1.0,
            max_backtracks: 40,
            source: GradientSource::Analytic,
        }
    }
}

impl GkvParams {
    pub fn validate(&self) -> Result<()> {
        fn bad(name: &'static str, value: f64, constraint: &'static str) -> CboError {
            CboError::InvalidParameter { name, value: format!("{value}"), constraint }
        }
        if self.ell == 0 {
            return Err(bad("ell", 0.0, "gradient injection period must be at least 1"));
        }
        if !(self.c_armijo > 0.0 && self.c_armijo < 1.0) {
            return Err(bad("c_armijo", self.c_armijo, "must lie in (0, 1)"));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(bad("tau", self.tau, "must lie in (0, 1)"));
        }
        if !(self.h0 > 0.0 && self.h0.is_finite()) {
            return Err(bad("h0", self.h0, "initial trial step must be positive and finite"));
        }
        if let GradientSource::CentralDifference { step } = self.source {
            if !(step > 0.0 && step.is_finite()) {
                return Err(bad("fd_step", step, "difference step must be positive and finite"));
            }
        }
        Ok(())
    }
}

/// Gradient of the objective at `v` projected onto the tangent space,
/// together with the number of objective evaluations spent (0 for analytic,
/// `2 dim` for central differences).
pub fn tangential_gradient(
    obj: &Objective,
    v: &[f64],
    source: GradientSource,
) -> Result<(Vec<f64>, usize)> {
    if v.len() != obj.dim() {
        return Err(CboError::DimensionMismatch {
            context: "gradient point",
            expected: obj.dim(),
            found: v.len(),
        });
    }
    let (mut grad, evals) = match source {
        GradientSource::Analytic => (obj.ambient_gradient(v)?, 0),
        GradientSource::CentralDifference { step } => {
            let mut g = vec![0.0; v.len()];
            let mut probe = v.to_vec();
            for k in 0..v.len() {
                probe[k] = v[k] + step;
                let plus = obj.eval(&probe);
                probe[k] = v[k] - step;
                let minus = obj.eval(&probe);
                probe[k] = v[k];
                g[k] = (plus - minus) / (2.0 * step);
            }
            (g, 2 * v.len())
        }
    };
    let proj = project_tangent(v, &grad);
    grad.copy_from_slice(&proj);
    Ok((grad, evals))
}

/// Armijo backtracking along `-g` from `v`: the largest candidate step
/// `h0 tau^k`, `k = 0..=max_backtracks`, satisfying
/// `E(v - h g) <= E(v) - c h |g|^2` on the raw trial point. Returns the
/// accepted step (0 if none passed) and the objective evaluations spent
/// (one for the base value plus one per trial).
pub fn armijo_linesearch(
    obj: &Objective,
    v: &[f64],
    g: &[f64],
    p: &GkvParams,
) -> (f64, usize) {
    let base = obj.eval(v);
    let mut evals = 1;
    let gsq = norm_sq(g);
    let mut trial = vec![0.0; v.len()];
    let mut h = p.h0;
    for _ in 0..=p.max_backtracks {
        for ((t, &x), &gk) in trial.iter_mut().zip(v).zip(g) {
            *t = x - h * gk;
        }
        let value = obj.eval(&trial);
        evals += 1;
        if value <= base - p.c_armijo * h * gsq {
            return (h, evals);
        }
        h *= p.tau;
    }
    (0.0, evals)
}

/// Apply one injected gradient step to a uniformly chosen agent; `iteration`
/// only annotates errors. Returns the number of objective evaluations spent.
/// Skips (cost 0 beyond the gradient) when the tangential gradient vanishes
/// exactly or no Armijo step is accepted.
pub fn gkv_inject(
    e: &mut Ensemble,
    obj: &Objective,
    p: &GkvParams,
    iteration: u64,
    rng: &mut ChaCha8Rng,
) -> Result<usize> {
    p.validate()?;
    if e.dim() != obj.dim() {
        return Err(CboError::DimensionMismatch {
            context: "gradient injection",
            expected: obj.dim(),
            found: e.dim(),
        });
    }
    let agent = rng.gen_range(0..e.len());
    let v = e.agent(agent).to_vec();
    let (g, mut evals) = tangential_gradient(obj, &v, p.source).map_err(|err| match err {
        CboError::MissingGradient { objective } => CboError::MissingGradient { objective },
        other => other,
    })?;
    if g.iter().all(|&x| x == 0.0) {
        return Ok(evals);
    }
    let (h, search_evals) = armijo_linesearch(obj, &v, &g, p);
    evals += search_evals;
    if h == 0.0 {
        return Ok(evals);
    }
    let row = e.agent_mut(agent);
    for (x, &gk) in row.iter_mut().zip(&g) {
        *x -= h * gk;
    }
    // |v - h g|^2 = 1 + h^2 |g|^2 because g is tangential, so the norm is
    // at least 1 and renormalization cannot fail; the scale factor is still
    // checked to surface bugs rather than mask them.
    let scale = norm_sq(row).sqrt();
    if !(scale >= 0.5) {
        return Err(CboError::DegenerateVector {
            context: format!("gradient step for agent {agent} at iteration {iteration}"),
            norm: scale,
        });
    }
    for x in row.iter_mut() {
        *x /= scale;
    }
    Ok(evals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{haystack, pca_energy, Objective};
    use crate::rng::master_rng;
    use crate::sphere::{dot, norm, UnitVector};
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    fn linear_objective(dim: usize, c: Vec<f64>) -> Objective {
        let c_eval = c.clone();
        Objective::new("linear", dim, move |v: &[f64]| {
            v.iter().zip(&c_eval).map(|(a, b)| a * b).sum()
        })
        .with_gradient(move |v: &[f64]| {
            let _ = v;
            c.clone()
        })
    }

    #[test]
    fn linear_gradient_is_the_projected_coefficient_vector() {
        let mut rng = master_rng(21);
        let c = vec![0.3, -1.2, 2.0, 0.7];
        let obj = linear_objective(4, c.clone());
        for _ in 0..10 {
            let v = UnitVector::sample_uniform(4, &mut rng).unwrap();
            let expected = project_tangent(v.as_slice(), &c);
            let (g, evals) = tangential_gradient(&obj, v.as_slice(), GradientSource::Analytic).unwrap();
            assert_eq!(evals, 0);
            for (a, b) in g.iter().zip(&expected) {
                assert!((a - b).abs() <= 1e-15);
            }
            let (g_fd, evals_fd) =
                tangential_gradient(&obj, v.as_slice(), GradientSource::CentralDifference { step: 1e-6 })
                    .unwrap();
            assert_eq!(evals_fd, 8);
            for (a, b) in g_fd.iter().zip(&expected) {
                assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn tangential_gradients_are_orthogonal_to_the_base_point() {
        let mut rng = master_rng(22);
        let cloud = haystack(6, 40, 40, &mut rng).unwrap();
        let obj = pca_energy(&cloud.cloud, 1.5).unwrap();
        for _ in 0..25 {
            let v = UnitVector::sample_uniform(6, &mut rng).unwrap();
            for source in [GradientSource::Analytic, GradientSource::CentralDifference { step: 1e-6 }] {
                let (g, _) = tangential_gradient(&obj, v.as_slice(), source).unwrap();
                let g_norm = norm(&g);
                assert!(dot(v.as_slice(), &g).abs() <= 1e-10 * g_norm.max(1.0));
            }
        }
    }

    #[test]
    fn analytic_and_difference_gradients_agree_on_subspace_energy() {
        let mut rng = master_rng(23);
        let cloud = haystack(5, 60, 30, &mut rng).unwrap();
        let obj = pca_energy(&cloud.cloud, 2.0).unwrap();
        for _ in 0..20 {
            let v = UnitVector::sample_uniform(5, &mut rng).unwrap();
            let (ga, _) = tangential_gradient(&obj, v.as_slice(), GradientSource::Analytic).unwrap();
            let (gd, _) = tangential_gradient(
                &obj,
                v.as_slice(),
                GradientSource::CentralDifference { step: 1e-6 },
            )
            .unwrap();
            let scale = norm(&ga).max(1e-12);
            for (a, b) in ga.iter().zip(&gd) {
                assert!((a - b).abs() / scale <= 1e-5, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn armijo_accepts_the_full_step_on_a_well_scaled_quadratic() {
        // f(v) = |v - e_1|^2 / 2 at v = e_2: the tangential gradient is
        // (-1, 0), the full step lands at (1, 1) where f = 1/2 against a
        // sufficient-decrease bound of 1 - 1e-4, so h0 = 1 is accepted
        // immediately.
        let obj = Objective::new("shifted-quadratic", 2, |v: &[f64]| {
            0.5 * ((v[0] - 1.0).powi(2) + v[1].powi(2))
        });
        let p = GkvParams::default();
        let v = [0.0, 1.0];
        let g = [-1.0, 0.0];
        let (h, evals) = armijo_linesearch(&obj, &v, &g, &p);
        assert_eq!(h, 1.0);
        assert_eq!(evals, 2);
    }

    #[test]
    fn armijo_returns_zero_when_every_trial_points_uphill() {
        let obj = Objective::new("flat-coordinate", 2, |v: &[f64]| v[1]);
        let p = GkvParams::default();
        // Moving against this "gradient" from e_2 slides along a level set,
        // which can never beat the strict sufficient-decrease bound.
        let (h, evals) = armijo_linesearch(&obj, &[0.0, 1.0], &[-1.0, 0.0], &p);
        assert_eq!(h, 0.0);
        assert_eq!(evals, 2 + p.max_backtracks as usize);
    }

    #[test]
    fn inject_skips_when_the_gradient_vanishes() {
        let obj = Objective::new("constant", 3, |_: &[f64]| 1.0)
            .with_gradient(|v: &[f64]| vec![0.0; v.len()]);
        let mut rng = master_rng(24);
        let mut e = Ensemble::sample_uniform(3, 5, &mut rng).unwrap();
        let before = e.as_flat().to_vec();
        let evals = gkv_inject(&mut e, &obj, &GkvParams::default(), 7, &mut rng).unwrap();
        assert_eq!(evals, 0);
        assert_eq!(e.as_flat(), &before[..]);
    }

    #[test]
    fn inject_never_increases_energy_after_renormalization() {
        let mut rng = master_rng(25);
        let p = GkvParams::default();
        for instance in 0..50 {
            let hay = haystack(4, 30, 20, &mut rng).unwrap();
            let obj = pca_energy(&hay.cloud, 2.0).unwrap();
            let mut e = Ensemble::sample_uniform(4, 6, &mut rng).unwrap();
            let before: Vec<f64> = e.rows().map(|r| obj.eval(r)).collect();
            gkv_inject(&mut e, &obj, &p, instance, &mut rng).unwrap();
            for (j, row) in e.rows().enumerate() {
                let after = obj.eval(row);
                assert!(
                    after <= before[j] + 1e-10,
                    "instance {instance} agent {j}: {} -> {after}",
                    before[j]
                );
                assert!((norm(row) - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn inject_stays_within_the_evaluation_budget() {
        let counter = Arc::new(AtomicUsize::new(0));
        let seen = counter.clone();
        let dim = 5;
        let obj = Objective::new("counted", dim, move |v: &[f64]| {
            seen.fetch_add(1, Ordering::Relaxed);
            v.iter().enumerate().map(|(k, x)| (x - 1.0 / (k + 1) as f64).powi(2)).sum()
        });
        let p = GkvParams {
            source: GradientSource::CentralDifference { step: 1e-6 },
            ..GkvParams::default()
        };
        let mut rng = master_rng(26);
        let mut e = Ensemble::sample_uniform(dim, 8, &mut rng).unwrap();
        let reported = gkv_inject(&mut e, &obj, &p, 0, &mut rng).unwrap();
        let actual = counter.load(Ordering::Relaxed);
        assert_eq!(reported, actual, "reported evaluation count must match reality");
        assert!(actual <= 2 + p.max_backtracks as usize + 2 * dim);
    }

    #[test]
    fn inject_is_deterministic_per_seed() {
        let hay = haystack(4, 40, 10, &mut master_rng(27)).unwrap();
        let obj = pca_energy(&hay.cloud, 1.0).unwrap();
        let p = GkvParams::default();
        let make = || {
            let mut rng = master_rng(28);
            let mut e = Ensemble::sample_uniform(4, 7, &mut rng).unwrap();
            gkv_inject(&mut e, &obj, &p, 3, &mut rng).unwrap();
            e.as_flat().to_vec()
        };
        assert_eq!(make(), make());
    }

    #[test]
    fn missing_gradient_is_reported() {
        let obj = Objective::new("no-grad", 3, |v: &[f64]| norm_sq(v));
        let v = [1.0, 0.0, 0.0];
        assert!(matches!(
            tangential_gradient(&obj, &v, GradientSource::Analytic),
            Err(CboError::MissingGradient { .. })
        ));
        assert_eq!(
            GradientSource::auto_for(&obj),
            GradientSource::CentralDifference { step: DEFAULT_FD_STEP }
        );
    }

    #[test]
    fn parameter_validation_rejects_bad_fields() {
        let ok = GkvParams::default();
        assert!(ok.validate().is_ok());
        assert!(GkvParams { ell: 0, ..ok }.validate().is_err());
        assert!(GkvParams { c_armijo: 0.0, ..ok }.validate().is_err());
        assert!(GkvParams { tau: 1.0, ..ok }.validate().is_err());
        assert!(GkvParams { h0: 0.0, ..ok }.validate().is_err());
        assert!(GkvParams {
            source: GradientSource::CentralDifference { step: 0.0 },
            ..ok
        }
        .validate()
        .is_err());
    }
}
