//! Objective functions over the unit sphere.
//!
//! Three families are provided:
//!
//! * classical multi-modal benchmark functions with a known, placeable
//!   minimizer ([`benchmarks`]),
//! * robust subspace-detection energies over point clouds, including the
//!   synthetic Haystack generator ([`robust_pca`]),
//! * phase-retrieval empirical risks over Gaussian frames
//!   ([`phase_retrieval`]).
//!
//! Every family builds an [`Objective`]: a boxed evaluation closure plus
//! optional metadata (known minimizer, analytic ambient gradient, symmetry
//! under negation). Objectives are immutable after construction and safe to
//! evaluate from many threads.

mod benchmarks;
mod phase_retrieval;
mod robust_pca;

pub use benchmarks::{
    ackley, alpine, griewank, rastrigin, rotated_minimizer, salomon, xsy_random, BenchmarkFn,
    XsyMode,
};
pub use phase_retrieval::{gaussian_frame, phase_retrieval_risk, Frame};
pub use robust_pca::{haystack, load_pointcloud_csv, pca_energy, Haystack, PointCloud};

use crate::error::{CboError, Result};
use crate::sphere::UnitVector;

type EvalFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type ContextEvalFn = dyn Fn(&[f64], u64, u64) -> f64 + Send + Sync;
type GradientFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// A real-valued function on (a neighborhood of) the sphere `S^{d-1}`,
/// bundled with the metadata the solver and the experiment harnesses need.
///
/// Evaluation is deterministic given its input; the one stochastic family
/// (the XSY random benchmark in redraw mode) derives its noise from the
/// evaluation context `(agent, iteration)` through a counter-based generator,
/// so repeated calls with identical arguments still agree.
pub struct Objective {
    name: String,
    dim: usize,
    even: bool,
    minimizer: Option<UnitVector>,
    known_minimum: Option<f64>,
    eval: Box<EvalFn>,
    contextual_eval: Option<Box<ContextEvalFn>>,
    gradient: Option<Box<GradientFn>>,
}

impl Objective {
    /// A bare objective from an evaluation closure; metadata is attached
    /// with the `with_*` builder methods.
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Objective {
            name: name.into(),
            dim,
            even: false,
            minimizer: None,
            known_minimum: None,
            eval: Box::new(eval),
            contextual_eval: None,
            gradient: None,
        }
    }

    /// Attach the known global minimizer and its objective value.
    pub fn with_minimizer(mut self, minimizer: UnitVector, minimum: f64) -> Self {
        assert_eq!(minimizer.dim(), self.dim, "minimizer dimension mismatch");
        self.minimizer = Some(minimizer);
        self.known_minimum = Some(minimum);
        self
    }

    /// Attach an analytic ambient (Euclidean) gradient.
    pub fn with_gradient(mut self, g: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.gradient = Some(Box::new(g));
        self
    }

    /// Attach a context-aware evaluation used by the solver loop; `eval`
    /// remains the context-free fallback.
    pub fn with_contextual_eval(
        mut self,
        f: impl Fn(&[f64], u64, u64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.contextual_eval = Some(Box::new(f));
        self
    }

    /// Declare the objective even (`eval(v) = eval(-v)`), so success metrics
    /// fold signs.
    pub fn with_even_symmetry(mut self) -> Self {
        self.even = true;
        self
    }

    /// Label used in reports and result tables.
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Ambient dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Whether `eval(v) = eval(-v)` holds identically.
    pub fn is_even(&self) -> bool {
        self.even
    }

    /// The known global minimizer on the sphere, when there is one.
    pub fn minimizer(&self) -> Option<&UnitVector> {
        self.minimizer.as_ref()
    }

    /// The objective value at the known minimizer, when there is one.
    pub fn known_minimum(&self) -> Option<f64> {
        self.known_minimum
    }

    /// Whether an analytic ambient gradient is available.
    pub fn has_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    /// Evaluate at `v` (context-free).
    pub fn eval(&self, v: &[f64]) -> f64 {
        (self.eval)(v)
    }

    /// Evaluate at `v` in the solver context `(agent, iteration)`.
    ///
    /// Identical to [`Objective::eval`] except for objectives that redraw
    /// per-evaluation noise, which key the draw on the context.
    pub fn eval_at(&self, v: &[f64], agent: u64, iteration: u64) -> f64 {
        match &self.contextual_eval {
            Some(f) => f(v, agent, iteration),
            None => (self.eval)(v),
        }
    }

    /// Analytic ambient gradient at `v`.
    ///
    /// Errors with [`CboError::MissingGradient`] when the objective carries
    /// none; callers that can fall back to finite differences should check
    /// [`Objective::has_gradient`] first.
    pub fn ambient_gradient(&self, v: &[f64]) -> Result<Vec<f64>> {
        match &self.gradient {
            Some(g) => Ok(g(v)),
            None => Err(CboError::MissingGradient { objective: self.name.clone() }),
        }
    }
}

impl std::fmt::Debug for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Objective")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("even", &self.even)
            .field("minimizer", &self.minimizer)
            .field("has_gradient", &self.gradient.is_some())
            .finish()
    }
}
