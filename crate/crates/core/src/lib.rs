//! Consensus-based optimization on the unit hypersphere.
//!
//! This crate implements a swarm method for minimizing (possibly non-smooth,
//! non-convex) functions over the unit sphere `S^{d-1}`. A finite ensemble of
//! agents drifts toward a softmin-weighted consensus point while being stirred
//! by projected stochastic exploration noise; an Ito correction keeps the
//! Euler–Maruyama scheme consistent with the constrained dynamics, and each
//! step ends with an exact renormalization back onto the sphere.
//!
//! The main entry points are:
//!
//! * [`dynamics::run`] — drive one ensemble to a stopping condition and
//!   report the final consensus point,
//! * [`objectives`] — benchmark functions plus robust subspace detection and
//!   phase retrieval energies,
//! * [`gradient`] — optional gradient-descent injections that refine single
//!   agents between consensus steps,
//! * [`experiments`] — multi-run harnesses (success-rate sweeps, robust PCA
//!   recovery curves, phase retrieval transition curves).
//!
//! All randomness flows from explicit seeds through counter-based generators,
//! so every run — including multi-threaded sweeps — is reproducible bit for
//! bit.

pub mod consensus;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod gradient;
pub mod objectives;
pub mod rng;
pub mod sphere;

pub use error::{CboError, Result};
pub use sphere::{Ensemble, EnsembleStats, UnitVector};
