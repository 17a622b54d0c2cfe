//! Model-based X-ray CT reconstruction built around Jensen surrogates.
//!
//! The objective is the regularized Poisson transmission log-likelihood
//!
//! ```text
//! Phi(x) = sum_i [ d_i (Hx)_i + I0_i exp(-(Hx)_i) ] + lambda * beta(x),   x >= 0,
//! ```
//!
//! where `H` holds ray/pixel intersection lengths and `beta` is an
//! edge-preserving Huber-log penalty over neighboring pixels. Minimization is
//! done either by majorize-minimize iterations on separable Jensen surrogates
//! (which reduce each update to independent 1-D convex solves) or by projected
//! gradient descent with a `1/L` step, each in three flavors: full data,
//! ordered subsets, and stochastic/cyclic subset averaging with O(2N)
//! running-sum bookkeeping.
//!
//! Modules:
//! - [`projector`]: 2-D parallel-beam geometry, Siddon-style sparse system
//!   matrix, forward/back projection, view-interleaved subset partitions.
//! - [`model`]: objective, gradient, and the power-iteration Lipschitz bound.
//! - [`surrogates`]: separable surrogate coefficients, the closed-form
//!   unregularized update, and majorization checks.
//! - [`solver1d`]: Newton and trust-region solvers for the per-pixel 1-D
//!   problems.
//! - [`algorithms`]: the seven iteration schemes with effective-data-pass
//!   accounting.
//! - [`simulate`]: phantoms and seeded Poisson measurement synthesis.
//!
//! The crate is `no_std`-compatible (with `alloc`); the default `std` feature
//! only adds `std::error::Error`-friendly conveniences in dependents. All
//! transcendental math goes through `libm`, so results are identical across
//! platforms and feature sets.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod algorithms;
pub mod image;
pub(crate) mod math;
pub mod model;
pub(crate) mod par;
pub mod projector;
pub mod rng;
pub mod simulate;
pub mod solver1d;
pub mod surrogates;

pub use algorithms::{
    run, AlgorithmConfig, AlgorithmError, AverageMemory, Progress, RunOutcome, RunRequest, Scheme,
};
pub use image::ImageVolume;
pub use model::{
    datafit_term, huber_log, huber_log_d1, huber_log_d2, NeighborhoodSystem, PoissonData,
    ReconProblem, RegularizerParams,
};
pub use projector::{partition_rays, Geometry, SparseSystemMatrix, SubsetPartition};
pub use simulate::{make_phantom, simulate_counts, Incident, Phantom, PhantomKind};
pub use solver1d::{minimize_1d, Method, Solve1D, SolveStatus, Solver1DConfig};
pub use surrogates::{closed_form_update, surrogate_majorization_check, ClosedFormOutcome};
