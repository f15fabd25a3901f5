//! Robust subspace detection: point clouds and the projection energy.
//!
//! The energy of a direction `v` over a centered point cloud is the sum of
//! `p`-th-power distances of the points to the line spanned by `v`:
//! `E_p(v) = sum_i |(I - v v^T) x_i|^p = sum_i (|x_i|^2 - <x_i, v>^2)^{p/2}`.
//! Minimizing it over the sphere recovers the dominant direction; `p < 2`
//! de-emphasizes outliers. The synthetic Haystack model provides clouds with
//! a known planted direction for benchmarking.

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Objective;
use crate::error::{CboError, Result};
use crate::sphere::{dot, norm_sq, UnitVector, DEGENERATE_NORM};

/// Residuals below this threshold contribute a zero gradient term (the
/// energy is non-smooth where a point lies exactly on the line).
const GRADIENT_RESIDUAL_FLOOR: f64 = 1e-12;

/// Reciprocal norm that projects an input onto its ray before evaluation;
/// degenerate inputs fall back to scale 1 (evaluation cannot error).
fn ray_scale(v: &[f64]) -> f64 {
    let n = norm_sq(v).sqrt();
    if n > DEGENERATE_NORM {
        1.0 / n
    } else {
        1.0
    }
}

/// A finite set of points in `R^d`, stored as flat row-major coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    dim: usize,
    data: Vec<f64>,
    /// Ground-truth dominant direction, for synthetic clouds that have one.
    inlier_direction: Option<UnitVector>,
}

impl PointCloud {
    /// Build a cloud from coordinate rows.
    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        if dim == 0 {
            return Err(CboError::InvalidParameter {
                name: "dim",
                value: dim.to_string(),
                constraint: "points need at least one coordinate",
            });
        }
        if rows.is_empty() {
            return Err(CboError::EmptyInput { context: "point cloud construction" });
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(CboError::DimensionMismatch {
                    context: "point cloud row",
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(PointCloud { dim, data, inlier_direction: None })
    }

    /// Number of points `P`.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    /// Always false: constructors reject empty clouds.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Ambient dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Coordinates of point `i`.
    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Iterate over point rows.
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Planted dominant direction, for synthetic clouds that carry one.
    pub fn inlier_direction(&self) -> Option<&UnitVector> {
        self.inlier_direction.as_ref()
    }
}

/// A synthetic Haystack sample: a spiked cloud plus the pieces needed to
/// score recovery against it.
#[derive(Clone, Debug)]
pub struct Haystack {
    /// The full benchmark cloud: inliers first, then outliers.
    pub cloud: PointCloud,
    /// The rank-one inlier components `g_i w` before perturbation — the
    /// noiseless reference data whose top singular direction is the oracle.
    pub rank_one_inliers: PointCloud,
    /// Number of inliers at the front of `cloud`.
    pub inlier_count: usize,
}

/// Sample a Haystack cloud: `inliers` points concentrated along a uniformly
/// drawn direction `w` and `outliers` isotropic distractors.
///
/// Inliers are `g w + 0.01 z` with `g ~ N(0,1)`, `z ~ N(0, I_d)` — the
/// rank-one-plus-isotropic factorization of `N(0, w w^T + 1e-4 I_d)`.
/// Outliers are `N(0, I_d / d)`, so both populations have expected squared
/// norm close to 1: `E|x_in|^2 = 1 + 1e-4 d` and `E|x_out|^2 = 1`.
pub fn haystack(dim: usize, inliers: usize, outliers: usize, rng: &mut ChaCha8Rng) -> Result<Haystack> {
    if dim < 2 {
        return Err(CboError::InvalidParameter {
            name: "dim",
            value: dim.to_string(),
            constraint: "the sphere needs ambient dimension at least 2",
        });
    }
    if inliers == 0 {
        return Err(CboError::InvalidParameter {
            name: "inliers",
            value: inliers.to_string(),
            constraint: "at least one inlier is required",
        });
    }

    let mut w = vec![0.0; dim];
    crate::sphere::sample_uniform_row(&mut w, rng);
    let w = UnitVector::normalized(&w)?;

    let total = inliers + outliers;
    let mut data = Vec::with_capacity(total * dim);
    let mut rank_one = Vec::with_capacity(inliers * dim);
    for _ in 0..inliers {
        let g: f64 = rng.sample(StandardNormal);
        let start = data.len();
        for &wk in w.as_slice() {
            data.push(g * wk);
        }
        rank_one.extend_from_slice(&data[start..]);
        for x in data[start..].iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *x += 1e-2 * z;
        }
    }
    let outlier_scale = 1.0 / (dim as f64).sqrt();
    for _ in 0..outliers {
        for _ in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            data.push(outlier_scale * z);
        }
    }

    Ok(Haystack {
        cloud: PointCloud { dim, data, inlier_direction: Some(w.clone()) },
        rank_one_inliers: PointCloud { dim, data: rank_one, inlier_direction: Some(w) },
        inlier_count: inliers,
    })
}

/// The robust projection energy `E_p(v) = sum_i (|x_i|^2 - <x_i, v>^2)^{p/2}`
/// for `0 < p <= 2`, with its analytic ambient gradient
/// `-p (|x_i|^2 - <x_i, v>^2)^{p/2 - 1} <x_i, v> x_i` summed over points
/// (terms with residual below 1e-12 contribute zero — the subgradient choice
/// at the non-smooth set).
///
/// Off-sphere inputs are normalized first, so the energy is constant along
/// rays and measures distance to the *line* spanned by `v` at any scale.
/// On the sphere this is the printed formula; away from it the constrained
/// form keeps line searches honest — inflating `|v|` cannot fake a decrease,
/// and a step accepted on a raw trial point keeps its decrease after the
/// pull-back onto the sphere.
pub fn pca_energy(cloud: &PointCloud, p: f64) -> Result<Objective> {
    if !(p > 0.0 && p <= 2.0) {
        return Err(CboError::InvalidParameter {
            name: "p",
            value: format!("{p}"),
            constraint: "the energy exponent must satisfy 0 < p <= 2",
        });
    }
    let cloud = Arc::new(cloud.clone());
    let dim = cloud.dim();

    // Squared point norms are fixed data: precompute once.
    let sq_norms: Arc<Vec<f64>> = Arc::new(cloud.rows().map(norm_sq).collect());

    let eval_cloud = Arc::clone(&cloud);
    let eval_norms = Arc::clone(&sq_norms);
    let half_p = p / 2.0;
    let eval = move |v: &[f64]| {
        let inv = ray_scale(v);
        let mut sum = 0.0;
        for (x, &xx) in eval_cloud.rows().zip(eval_norms.iter()) {
            let xv = dot(x, v) * inv;
            // Roundoff can push the residual a hair negative when x is
            // parallel to v; clamp before the fractional power.
            let residual = (xx - xv * xv).max(0.0);
            sum += if half_p == 1.0 { residual } else { residual.powf(half_p) };
        }
        sum
    };

    let grad_cloud = Arc::clone(&cloud);
    let grad_norms = Arc::clone(&sq_norms);
    let gradient = move |v: &[f64]| {
        let inv = ray_scale(v);
        let mut g = vec![0.0; v.len()];
        for (x, &xx) in grad_cloud.rows().zip(grad_norms.iter()) {
            let xv = dot(x, v) * inv;
            let residual = (xx - xv * xv).max(0.0);
            if residual < GRADIENT_RESIDUAL_FLOOR {
                continue;
            }
            let coeff = -p * residual.powf(half_p - 1.0) * xv;
            for (gk, xk) in g.iter_mut().zip(x) {
                *gk += coeff * xk;
            }
        }
        g
    };

    // No known minimizer is attached: even for synthetic clouds the planted
    // direction only approximates the minimizer of the *sampled* energy, so
    // recovery experiments score against their own oracle instead.
    Ok(Objective::new(format!("pca-energy-p{p}"), dim, eval)
        .with_gradient(gradient)
        .with_even_symmetry())
}

/// Load a point cloud from a headerless CSV file (one point per row,
/// comma-separated decimal floats) and center it by subtracting the column
/// mean, as the energy assumes centered data.
pub fn load_pointcloud_csv(path: impl AsRef<Path>) -> Result<PointCloud> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut dim = 0usize;
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::with_capacity(dim.max(1));
        for (col, cell) in line.split(',').enumerate() {
            let value: f64 = cell.trim().parse().map_err(|_| CboError::PointCloudFormat {
                line: line_no + 1,
                message: format!("column {}: `{}` is not a number", col + 1, cell.trim()),
            })?;
            row.push(value);
        }
        if rows.is_empty() {
            dim = row.len();
        } else if row.len() != dim {
            return Err(CboError::PointCloudFormat {
                line: line_no + 1,
                message: format!("expected {dim} columns, found {}", row.len()),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CboError::PointCloudFormat {
            line: 1,
            message: "file contains no data rows".to_string(),
        });
    }

    let count = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for row in &rows {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x / count;
        }
    }
    for row in rows.iter_mut() {
        for (x, m) in row.iter_mut().zip(&mean) {
            *x -= m;
        }
    }
    PointCloud::from_rows(dim, &rows)
}
