//! Geometry of the unit sphere `S^{d-1}` embedded in `R^d`.
//!
//! Agents are plain `f64` coordinate rows kept exactly on the sphere by
//! renormalization. The module provides the two primitives the dynamics are
//! built from — tangent-space projection and safe renormalization — plus
//! samplers for the uniform and von Mises–Fisher distributions and the
//! ensemble container with its mean/variance statistics.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CboError, Result};

/// Norm below which a vector cannot be renormalized reliably.
pub const DEGENERATE_NORM: f64 = 1e-14;

// ---------------------------------------------------------------------------
// Small dense-vector helpers. Dimensions here are tiny (tens to hundreds), so
// plain slices beat any matrix library; callers are expected to pass slices of
// equal length and get a panic otherwise, as for indexing.
// ---------------------------------------------------------------------------

/// Euclidean inner product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot of mismatched lengths");
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Squared Euclidean norm.
pub fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Euclidean norm.
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

/// Euclidean distance `|a - b|`.
pub fn euclidean_dist(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "distance of mismatched lengths");
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Supremum-norm distance `max_k |a_k - b_k|`.
pub fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "distance of mismatched lengths");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Sup-norm distance up to sign: `min(sup|a - b|, sup|a + b|)`.
///
/// Appropriate for even objectives, where `v` and `-v` are equivalent.
pub fn folded_sup_dist(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "distance of mismatched lengths");
    let (mut minus, mut plus) = (0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        minus = minus.max((x - y).abs());
        plus = plus.max((x + y).abs());
    }
    minus.min(plus)
}

/// Euclidean distance up to sign: `min(|a - b|, |a + b|)`.
pub fn folded_euclidean_dist(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "distance of mismatched lengths");
    let (mut minus, mut plus) = (0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        minus += (x - y) * (x - y);
        plus += (x + y) * (x + y);
    }
    minus.min(plus).sqrt()
}

/// Project `y` onto the tangent space of the sphere at `v`:
/// `P(v) y = y - <v, y> v` with `P(v) = I - v v^T`.
///
/// `v` must be a unit vector (renormalize first if unsure). The result is
/// orthogonal to `v` up to roundoff: `|<v, P(v) y>| <= 1e-12 |y|`.
pub fn project_tangent(v: &[f64], y: &[f64]) -> Vec<f64> {
    debug_assert!((norm(v) - 1.0).abs() < 1e-9, "project_tangent needs a unit base point");
    let vy = dot(v, y);
    y.iter().zip(v).map(|(yk, vk)| yk - vy * vk).collect()
}

/// Normalize `coords` in place, returning the original norm.
///
/// Fails with [`CboError::DegenerateVector`] when the norm is not finite or
/// falls below [`DEGENERATE_NORM`]; `context` names the vector in the error.
pub(crate) fn renormalize_in_place(coords: &mut [f64], context: impl FnOnce() -> String) -> Result<f64> {
    let n = norm(coords);
    if !n.is_finite() || n < DEGENERATE_NORM {
        return Err(CboError::DegenerateVector { context: context(), norm: n });
    }
    for x in coords.iter_mut() {
        *x /= n;
    }
    Ok(n)
}

// ---------------------------------------------------------------------------
// UnitVector
// ---------------------------------------------------------------------------

/// A point on `S^{d-1}`: coordinates with Euclidean norm 1 (to roundoff).
///
/// Construction always goes through renormalization, so holding a
/// `UnitVector` is proof that the invariant `| |v| - 1 | <= 1e-12` holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Renormalize `coords` onto the sphere.
    ///
    /// Errors when the norm is non-finite or below [`DEGENERATE_NORM`] —
    /// direction information is lost at that scale, so no default is invented.
    pub fn normalized(coords: &[f64]) -> Result<Self> {
        if coords.len() < 2 {
            return Err(CboError::InvalidParameter {
                name: "dim",
                value: coords.len().to_string(),
                constraint: "the sphere needs ambient dimension at least 2",
            });
        }
        let mut v = coords.to_vec();
        renormalize_in_place(&mut v, || "renormalization input".to_string())?;
        Ok(UnitVector(v))
    }

    /// The standard basis vector `e_axis` (zero-based axis index).
    pub fn basis(dim: usize, axis: usize) -> Result<Self> {
        if dim < 2 {
            return Err(CboError::InvalidParameter {
                name: "dim",
                value: dim.to_string(),
                constraint: "the sphere needs ambient dimension at least 2",
            });
        }
        if axis >= dim {
            return Err(CboError::InvalidParameter {
                name: "axis",
                value: axis.to_string(),
                constraint: "basis axis must be below the dimension",
            });
        }
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        Ok(UnitVector(v))
    }

    /// Draw one uniformly distributed point on the sphere.
    pub fn sample_uniform(dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if dim < 2 {
            return Err(CboError::InvalidParameter {
                name: "dim",
                value: dim.to_string(),
                constraint: "the sphere needs ambient dimension at least 2",
            });
        }
        let mut v = vec![0.0; dim];
        sample_uniform_row(&mut v, rng);
        Ok(UnitVector(v))
    }

    /// Ambient dimension `d`.
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Coordinates as a slice.
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Consume and return the coordinate vector.
    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for UnitVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

// ---------------------------------------------------------------------------
// Ensemble
// ---------------------------------------------------------------------------

/// A finite ensemble of agents on `S^{d-1}`, stored as a flat row-major
/// buffer (`count * dim` floats).
///
/// Invariants: at least one agent, ambient dimension at least 2, and every
/// row unit length. All constructors enforce these.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    dim: usize,
    data: Vec<f64>,
}

/// Mean and spread of an ensemble.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleStats {
    /// Coordinate-wise mean of the agents (generally inside the ball, not on
    /// the sphere).
    pub mean: Vec<f64>,
    /// Mean squared distance to the mean: `(1/N) sum_j |v_j - mean|^2`.
    pub variance: f64,
}

impl Ensemble {
    /// Build an ensemble from coordinate rows, renormalizing each row.
    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        if dim < 2 {
            return Err(CboError::InvalidParameter {
                name: "dim",
                value: dim.to_string(),
                constraint: "the sphere needs ambient dimension at least 2",
            });
        }
        if rows.is_empty() {
            return Err(CboError::EmptyInput { context: "ensemble construction" });
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(CboError::DimensionMismatch {
                    context: "ensemble row",
                    expected: dim,
                    found: row.len(),
                });
            }
            let start = data.len();
            data.extend_from_slice(row);
            renormalize_in_place(&mut data[start..], || format!("ensemble row {i}"))?;
        }
        Ok(Ensemble { dim, data })
    }

    /// Sample `count` agents independently from the uniform distribution on
    /// `S^{d-1}` (normalized standard Gaussians).
    pub fn sample_uniform(dim: usize, count: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        validate_sample_shape(dim, count)?;
        let mut data = vec![0.0; count * dim];
        for i in 0..count {
            let row = &mut data[i * dim..(i + 1) * dim];
            sample_uniform_row(row, rng);
        }
        Ok(Ensemble { dim, data })
    }

    /// Sample `count` agents from the von Mises–Fisher distribution with mean
    /// direction `mu` and concentration `kappa >= 0` (rejection sampling on
    /// the radial component against a Beta envelope; `kappa = 0` reduces to
    /// the uniform distribution).
    pub fn sample_vmf(mu: &UnitVector, kappa: f64, count: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let dim = mu.dim();
        validate_sample_shape(dim, count)?;
        if !kappa.is_finite() || kappa < 0.0 {
            return Err(CboError::InvalidParameter {
                name: "kappa",
                value: format!("{kappa}"),
                constraint: "concentration must be finite and non-negative",
            });
        }

        let dm1 = (dim - 1) as f64;
        let b = (-2.0 * kappa + (4.0 * kappa * kappa + dm1 * dm1).sqrt()) / dm1;
        let x0 = (1.0 - b) / (1.0 + b);
        let c = kappa * x0 + dm1 * (1.0 - x0 * x0).ln();
        let beta = Beta::new(dm1 / 2.0, dm1 / 2.0).expect("positive Beta parameters");

        let mut data = vec![0.0; count * dim];
        for i in 0..count {
            // Radial component t = <mu, v> by accept/reject.
            let t = loop {
                let z: f64 = rng.sample(beta);
                let u: f64 = rng.gen();
                let t = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
                if kappa * t + dm1 * (1.0 - x0 * t).ln() - c >= u.ln() {
                    break t;
                }
            };
            // Tangential direction: a Gaussian projected off mu, normalized.
            let row = &mut data[i * dim..(i + 1) * dim];
            loop {
                for x in row.iter_mut() {
                    *x = rng.sample(StandardNormal);
                }
                let vy = dot(mu.as_slice(), row);
                for (x, m) in row.iter_mut().zip(mu.as_slice()) {
                    *x -= vy * m;
                }
                if norm(row) >= DEGENERATE_NORM {
                    break;
                }
            }
            renormalize_in_place(row, || format!("tangential direction of sample {i}"))?;
            let s = (1.0 - t * t).max(0.0).sqrt();
            for (x, m) in row.iter_mut().zip(mu.as_slice()) {
                *x = t * m + s * *x;
            }
            renormalize_in_place(row, || format!("von Mises-Fisher sample {i}"))?;
        }
        Ok(Ensemble { dim, data })
    }

    /// Number of agents `N`.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    /// Always false: constructors reject empty ensembles.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Ambient dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Coordinates of agent `i`.
    pub fn agent(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Mutable coordinates of agent `i`.
    pub fn agent_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Iterate over agent rows.
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// The flat row-major buffer.
    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Mean and variance of the ensemble.
    ///
    /// The variance is accumulated directly as `(1/N) sum_j |v_j - mean|^2`
    /// rather than through the algebraic shortcut `1 - |mean|^2`, so the two
    /// can be compared as an independent consistency check.
    pub fn stats(&self) -> EnsembleStats {
        let n = self.len();
        let mut mean = vec![0.0; self.dim];
        for row in self.rows() {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        for m in mean.iter_mut() {
            *m /= n as f64;
        }
        let mut variance = 0.0;
        for row in self.rows() {
            variance += euclidean_dist(row, &mean).powi(2);
        }
        variance /= n as f64;
        EnsembleStats { mean, variance }
    }

    /// Remove the agents at the given indices, preserving the order of the
    /// survivors. Indices must be strictly increasing, in range, and must
    /// leave at least one agent.
    pub fn discard(&mut self, drop: &[usize]) -> Result<()> {
        if drop.is_empty() {
            return Ok(());
        }
        let n = self.len();
        let increasing = drop.windows(2).all(|w| w[0] < w[1]);
        if !increasing || *drop.last().unwrap() >= n {
            return Err(CboError::InvalidParameter {
                name: "drop",
                value: format!("{drop:?}"),
                constraint: "discard indices must be strictly increasing and in range",
            });
        }
        if drop.len() >= n {
            return Err(CboError::InvalidParameter {
                name: "drop",
                value: drop.len().to_string(),
                constraint: "discarding must leave at least one agent",
            });
        }
        let dim = self.dim;
        let mut write = 0;
        let mut next_drop = 0;
        for read in 0..n {
            if next_drop < drop.len() && drop[next_drop] == read {
                next_drop += 1;
                continue;
            }
            if write != read {
                let (w, r) = (write * dim, read * dim);
                self.data.copy_within(r..r + dim, w);
            }
            write += 1;
        }
        self.data.truncate(write * dim);
        Ok(())
    }
}

fn validate_sample_shape(dim: usize, count: usize) -> Result<()> {
    if dim < 2 {
        return Err(CboError::InvalidParameter {
            name: "dim",
            value: dim.to_string(),
            constraint: "the sphere needs ambient dimension at least 2",
        });
    }
    if count == 0 {
        return Err(CboError::InvalidParameter {
            name: "count",
            value: count.to_string(),
            constraint: "at least one sample is required",
        });
    }
    Ok(())
}

/// Fill `row` with one uniform sample on the sphere.
pub(crate) fn sample_uniform_row(row: &mut [f64], rng: &mut ChaCha8Rng) {
    loop {
        for x in row.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        // Resampling on a degenerate draw has probability ~0 but keeps the
        // invariant unconditional.
        if renormalize_in_place(row, || "uniform sphere sample".to_string()).is_ok() {
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::master_rng;
    use approx::assert_abs_diff_eq;

    #[test]
    fn normalized_rescales_to_unit_length() {
        let v = UnitVector::normalized(&[3.0, 4.0]).unwrap();
        assert_abs_diff_eq!(v.as_slice()[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(v.as_slice()[1], 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(norm(v.as_slice()), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn normalized_rejects_degenerate_input() {
        let err = UnitVector::normalized(&[1e-300, 0.0]).unwrap_err();
        assert!(matches!(err, CboError::DegenerateVector { .. }), "got {err}");
        assert!(UnitVector::normalized(&[f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn projection_removes_radial_component() {
        let v = UnitVector::basis(2, 0).unwrap();
        let p = project_tangent(v.as_slice(), &[2.0, 5.0]);
        assert_eq!(p, vec![0.0, 5.0]);
        // Orthogonality in a generic configuration.
        let mut rng = master_rng(11);
        for _ in 0..100 {
            let mut v = vec![0.0; 7];
            sample_uniform_row(&mut v, &mut rng);
            let y: Vec<f64> = (0..7).map(|_| rng.sample::<f64, _>(StandardNormal) * 3.0).collect();
            let p = project_tangent(&v, &y);
            assert!(dot(&v, &p).abs() <= 1e-12 * norm(&y).max(1.0));
        }
    }

    #[test]
    fn uniform_sampler_matches_clt_bounds() {
        // Coordinate means of n uniform samples have sd 1/sqrt(n d); four
        // standard deviations is a comfortable deterministic bound for a
        // frozen seed.
        let (d, n) = (20, 10_000);
        let mut rng = master_rng(2024);
        let e = Ensemble::sample_uniform(d, n, &mut rng).unwrap();
        let stats = e.stats();
        let bound = 4.0 / ((n * d) as f64).sqrt();
        for (k, m) in stats.mean.iter().enumerate() {
            assert!(m.abs() <= bound, "coordinate {k} mean {m} exceeds {bound}");
        }
        assert!(norm(&stats.mean) <= 5.0 / (n as f64).sqrt());
        for row in e.rows() {
            assert!((norm(row) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn uniform_sampler_coordinate_histogram_is_flat_in_three_dimensions() {
        // On S^2 each coordinate of a uniform point is uniform on [-1, 1]
        // (Archimedes). Chi-square over 20 equal bins, 1e4 samples, against
        // the 0.99 quantile of chi-square with 19 degrees of freedom.
        let n = 10_000;
        let mut rng = master_rng(5);
        let e = Ensemble::sample_uniform(3, n, &mut rng).unwrap();
        for coord in 0..3 {
            let mut counts = [0usize; 20];
            for row in e.rows() {
                let t = row[coord].clamp(-1.0, 1.0 - 1e-12);
                counts[((t + 1.0) / 2.0 * 20.0) as usize] += 1;
            }
            let expected = n as f64 / 20.0;
            let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
            assert!(chi2 < 36.191, "coordinate {coord}: chi-square {chi2} exceeds 0.99 quantile");
        }
    }

    /// Radial mean `E[<mu, v>]` of the von Mises–Fisher distribution by
    /// Simpson quadrature of `t (1-t^2)^{(d-3)/2} e^{kappa (t-1)}` over
    /// `[-1, 1]`, normalized. (The shift by `e^{-kappa}` cancels and keeps
    /// the integrand in range.)
    fn vmf_radial_mean_quadrature(d: usize, kappa: f64) -> f64 {
        let steps = 200_000;
        let h = 2.0 / steps as f64;
        let density = |t: f64| (1.0 - t * t).max(0.0).powf((d as f64 - 3.0) / 2.0) * (kappa * (t - 1.0)).exp();
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..=steps {
            let t = -1.0 + i as f64 * h;
            let w = if i == 0 || i == steps {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            num += w * t * density(t);
            den += w * density(t);
        }
        num / den
    }

    #[test]
    fn vmf_sampler_matches_quadrature_radial_mean() {
        let (d, kappa, n) = (10, 100.0, 1000);
        let oracle = vmf_radial_mean_quadrature(d, kappa);
        // Sanity-pin the oracle itself: for d=10, kappa=100 the radial mean
        // sits just above 1 - (d-1)/(2 kappa) = 0.955.
        assert!((oracle - 0.9558).abs() < 1e-3, "quadrature oracle moved: {oracle}");

        let mu = UnitVector::basis(d, 3).unwrap();
        let mut rng = master_rng(41);
        let e = Ensemble::sample_vmf(&mu, kappa, n, &mut rng).unwrap();
        let mean_t: f64 = e.rows().map(|row| dot(row, mu.as_slice())).sum::<f64>() / n as f64;
        // Radial sd is about sqrt((d-1)/2)/kappa ~ 0.021, so the sample mean
        // of 1e3 draws has sd ~ 7e-4; 5e-3 is a seven-sigma budget.
        assert!(
            (mean_t - oracle).abs() <= 5e-3,
            "empirical radial mean {mean_t} vs quadrature {oracle}"
        );
        // The empirical mean direction recovers mu.
        let stats = e.stats();
        let dir = UnitVector::normalized(&stats.mean).unwrap();
        assert!(dot(dir.as_slice(), mu.as_slice()) > 0.999);
        for row in e.rows() {
            assert!((norm(row) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn vmf_with_zero_concentration_is_uniform() {
        // kappa = 0 must reduce to the uniform law; on S^2 the coordinate
        // along mu is then uniform on [-1, 1], testable by chi-square exactly
        // as for the uniform sampler.
        let n = 10_000;
        let mu = UnitVector::basis(3, 1).unwrap();
        let mut rng = master_rng(17);
        let e = Ensemble::sample_vmf(&mu, 0.0, n, &mut rng).unwrap();
        let mut counts = [0usize; 20];
        for row in e.rows() {
            let t = dot(row, mu.as_slice()).clamp(-1.0, 1.0 - 1e-12);
            counts[((t + 1.0) / 2.0 * 20.0) as usize] += 1;
        }
        let expected = n as f64 / 20.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 36.191, "chi-square {chi2} exceeds 0.99 quantile");
    }

    #[test]
    fn vmf_rejects_bad_concentration() {
        let mu = UnitVector::basis(4, 0).unwrap();
        let mut rng = master_rng(0);
        assert!(Ensemble::sample_vmf(&mu, -1.0, 5, &mut rng).is_err());
        assert!(Ensemble::sample_vmf(&mu, f64::INFINITY, 5, &mut rng).is_err());
    }

    #[test]
    fn stats_of_two_orthogonal_agents() {
        let e = Ensemble::from_rows(2, &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let s = e.stats();
        assert_eq!(s.mean, vec![0.5, 0.5]);
        assert_abs_diff_eq!(s.variance, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn constructors_reject_degenerate_shapes() {
        assert!(Ensemble::from_rows(2, &[]).is_err());
        assert!(Ensemble::from_rows(1, &[vec![1.0]]).is_err());
        assert!(Ensemble::from_rows(3, &[vec![1.0, 0.0]]).is_err());
        let mut rng = master_rng(0);
        assert!(Ensemble::sample_uniform(2, 0, &mut rng).is_err());
        assert!(Ensemble::sample_uniform(1, 5, &mut rng).is_err());
    }

    #[test]
    fn discard_preserves_survivor_order() {
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|i| {
                let angle = i as f64;
                vec![angle.cos(), angle.sin()]
            })
            .collect();
        let mut e = Ensemble::from_rows(2, &rows).unwrap();
        let keep1 = e.agent(1).to_vec();
        let keep3 = e.agent(3).to_vec();
        e.discard(&[0, 2, 4]).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e.agent(0), &keep1[..]);
        assert_eq!(e.agent(1), &keep3[..]);

        assert!(e.discard(&[1, 1]).is_err(), "duplicate indices must be rejected");
        assert!(e.discard(&[5]).is_err(), "out of range indices must be rejected");
        assert!(e.discard(&[0, 1]).is_err(), "dropping every agent must be rejected");
    }
}
