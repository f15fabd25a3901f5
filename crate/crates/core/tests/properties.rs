//! Randomized property tests for the library's structural invariants:
//! sphere preservation, noise tangency, consensus-weight algebra, batch
//! selection contracts, metric symmetries, and estimator bounds.

use proptest::prelude::*;

use sphere_cbo::consensus::{
    consensus_point, consensus_point_batch, select_batch, softmin_weights,
};
use sphere_cbo::dynamics::{
    discard_update, draw_noise, noise_increment, step_anisotropic_with_noise,
    step_isotropic_with_noise, NoiseMode, SolverParams,
};
use sphere_cbo::experiments::wilson_interval;
use sphere_cbo::rng::master_rng;
use sphere_cbo::sphere::{
    dot, euclidean_dist, folded_sup_dist, norm, sup_dist, Ensemble, UnitVector,
};

/// A point on the unit sphere in `dim` ambient dimensions.
fn unit_vec(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, dim).prop_filter_map("norm too small", |v| {
        let n = norm(&v);
        if n > 0.3 {
            Some(v.iter().map(|x| x / n).collect::<Vec<f64>>())
        } else {
            None
        }
    })
}

/// An ensemble of 1..=8 agents in 2..=6 dimensions, with its dimension.
fn ensemble() -> impl Strategy<Value = (usize, Vec<Vec<f64>>)> {
    (2usize..=6).prop_flat_map(|dim| {
        prop::collection::vec(unit_vec(dim), 1..=8).prop_map(move |rows| (dim, rows))
    })
}

fn step_params(dim_agents: (usize, usize), sigma: f64, dt: f64, mode: NoiseMode) -> SolverParams {
    let (_, n) = dim_agents;
    SolverParams {
        sigma,
        dt,
        n_agents: n,
        batch_size: n.min(1).max(1),
        n_min: 1,
        noise_mode: mode,
        ..SolverParams::default()
    }
}

proptest! {
    /// The projected stochastic increment is orthogonal to the agent it
    /// perturbs, in both noise modes.
    #[test]
    fn noise_increments_are_tangent(
        (dim, rows) in ensemble(),
        target in unit_vec(6),
        sigma in 0.0f64..4.0,
        dt in 1e-4f64..0.3,
        aniso in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let e = Ensemble::from_rows(dim, &rows).unwrap();
        let vcons: Vec<f64> = target[..dim.min(target.len())]
            .iter()
            .copied()
            .chain(std::iter::repeat(0.0))
            .take(dim)
            .collect();
        let mode = if aniso { NoiseMode::Anisotropic } else { NoiseMode::Isotropic };
        let p = step_params((dim, e.len()), sigma, dt, mode);
        let mut rng = master_rng(seed);
        let db = draw_noise(e.len() * dim, dt, &mut rng);
        for i in 0..e.len() {
            let inc = noise_increment(e.agent(i), &vcons, &p, &db[i * dim..(i + 1) * dim]);
            prop_assert!(dot(e.agent(i), &inc).abs() <= 1e-12);
        }
    }

    /// A full step leaves every agent on the unit sphere.
    #[test]
    fn steps_preserve_unit_norms(
        (dim, rows) in ensemble(),
        sigma in 0.0f64..4.0,
        dt in 1e-4f64..0.3,
        aniso in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let mut e = Ensemble::from_rows(dim, &rows).unwrap();
        let n = e.len();
        let values: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let vcons = consensus_point(&e, &values, 10.0).unwrap();
        let mode = if aniso { NoiseMode::Anisotropic } else { NoiseMode::Isotropic };
        let p = step_params((dim, n), sigma, dt, mode);
        let mut rng = master_rng(seed);
        let db = draw_noise(n * dim, dt, &mut rng);
        match mode {
            NoiseMode::Anisotropic => step_anisotropic_with_noise(&mut e, &vcons, &p, &db).unwrap(),
            NoiseMode::Isotropic => step_isotropic_with_noise(&mut e, &vcons, &p, &db).unwrap(),
        }
        for i in 0..n {
            prop_assert!((norm(e.agent(i)) - 1.0).abs() <= 1e-12);
        }
    }

    /// Adding a constant to every objective value leaves the consensus
    /// point unchanged (the weights are recentered at the minimum).
    #[test]
    fn consensus_is_shift_invariant(
        (dim, rows) in ensemble(),
        shift in -50.0f64..50.0,
        alpha in 0.0f64..100.0,
        base in prop::collection::vec(-3.0f64..3.0, 8),
    ) {
        let e = Ensemble::from_rows(dim, &rows).unwrap();
        let values: Vec<f64> = base.iter().take(e.len()).copied().collect();
        prop_assume!(values.len() == e.len());
        let plain = consensus_point(&e, &values, alpha).unwrap();
        let shifted_values: Vec<f64> = values.iter().map(|v| v + shift).collect();
        let shifted = consensus_point(&e, &shifted_values, alpha).unwrap();
        prop_assert_eq!(plain.best_index, shifted.best_index);
        for (a, b) in plain.point.iter().zip(&shifted.point) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    /// A strictly increasing affine transform of the values cannot change
    /// which agent is best.
    #[test]
    fn best_agent_is_stable_under_monotone_transforms(
        (dim, rows) in ensemble(),
        scale in 0.1f64..10.0,
        offset in -20.0f64..20.0,
        base in prop::collection::vec(-3.0f64..3.0, 8),
    ) {
        let e = Ensemble::from_rows(dim, &rows).unwrap();
        let values: Vec<f64> = base.iter().take(e.len()).copied().collect();
        prop_assume!(values.len() == e.len());
        let plain = consensus_point(&e, &values, f64::INFINITY).unwrap();
        let mapped: Vec<f64> = values.iter().map(|v| scale * v + offset).collect();
        let transformed = consensus_point(&e, &mapped, f64::INFINITY).unwrap();
        prop_assert_eq!(plain.best_index, transformed.best_index);
    }

    /// Evaluating a batch containing every agent is exactly the full
    /// consensus computation.
    #[test]
    fn full_batch_equals_full_consensus(
        (dim, rows) in ensemble(),
        alpha in 0.0f64..1e4,
        base in prop::collection::vec(-3.0f64..3.0, 8),
    ) {
        let e = Ensemble::from_rows(dim, &rows).unwrap();
        let values: Vec<f64> = base.iter().take(e.len()).copied().collect();
        prop_assume!(values.len() == e.len());
        let indices: Vec<usize> = (0..e.len()).collect();
        let full = consensus_point(&e, &values, alpha).unwrap();
        let batch = consensus_point_batch(&e, &indices, &values, alpha).unwrap();
        prop_assert_eq!(full, batch);
    }

    /// Batch selection returns sorted, distinct, in-range indices, clamping
    /// oversized requests to the population.
    #[test]
    fn batch_selection_contract(
        n in 1usize..50,
        m in 1usize..80,
        seed in any::<u64>(),
    ) {
        let mut rng = master_rng(seed);
        let batch = select_batch(n, m, &mut rng).unwrap();
        prop_assert_eq!(batch.len(), m.min(n));
        prop_assert!(batch.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(batch.iter().all(|&i| i < n));
    }

    /// The discard rule never grows the ensemble and never goes below the
    /// floor (when the floor is attainable).
    #[test]
    fn discard_update_stays_in_bounds(
        n in 1usize..500,
        n_min in 1usize..500,
        sigma_prev in 0.0f64..5.0,
        sigma_next in 0.0f64..5.0,
        mu in 0.0f64..1.0,
    ) {
        let next = discard_update(n, sigma_prev, sigma_next, mu, n_min);
        prop_assert!(next <= n);
        prop_assert!(next >= n_min.min(n));
    }

    /// Softmin weights are a probability vector and the best agent carries
    /// the largest weight.
    #[test]
    fn softmin_weights_are_normalized(
        values in prop::collection::vec(-4.0f64..4.0, 1..12),
        alpha in 0.0f64..1e3,
    ) {
        let w = softmin_weights(&values, alpha).unwrap();
        let total: f64 = w.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(w.iter().all(|x| (0.0..=1.0 + 1e-15).contains(x)));
        let best = values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        prop_assert!(w.iter().all(|&x| x <= w[best] + 1e-15));
    }

    /// The sup-norm never exceeds the Euclidean norm of the difference.
    #[test]
    fn sup_distance_bounded_by_euclidean(a in unit_vec(5), b in unit_vec(5)) {
        prop_assert!(sup_dist(&a, &b) <= euclidean_dist(&a, &b) + 1e-15);
    }

    /// Sign-folded distances are exactly symmetric under global sign flips
    /// of either argument.
    #[test]
    fn folded_distance_is_sign_symmetric(a in unit_vec(4), b in unit_vec(4)) {
        let neg_a: Vec<f64> = a.iter().map(|x| -x).collect();
        let neg_b: Vec<f64> = b.iter().map(|x| -x).collect();
        prop_assert_eq!(folded_sup_dist(&a, &b), folded_sup_dist(&neg_a, &b));
        prop_assert_eq!(folded_sup_dist(&a, &b), folded_sup_dist(&a, &neg_b));
    }

    /// Wilson intervals always bracket the point estimate inside [0, 1].
    #[test]
    fn wilson_interval_brackets_rate(trials in 1usize..200, successes_frac in 0.0f64..=1.0) {
        let successes = ((trials as f64) * successes_frac).round() as usize;
        let successes = successes.min(trials);
        let (low, high) = wilson_interval(successes, trials);
        let rate = successes as f64 / trials as f64;
        prop_assert!(0.0 <= low && low <= rate && rate <= high && high <= 1.0);
    }

    /// Renormalizing an already-unit vector is the identity up to one ulp
    /// per coordinate.
    #[test]
    fn unit_vectors_renormalize_to_themselves(v in unit_vec(6)) {
        let unit = UnitVector::normalized(&v).unwrap();
        for (a, b) in unit.as_slice().iter().zip(&v) {
            prop_assert!((a - b).abs() <= 1e-15);
        }
    }
}
