//! Solvers for the per-pixel 1-D convex surrogate minimization over `x >= 0`.
//!
//! Three methods:
//! - `Newton`: projected Newton steps. Fast but can overshoot badly when the
//!   exponential term is nearly flat at the current point and steep elsewhere.
//! - `TrustRegion`: Newton step clamped to an adaptive radius with the usual
//!   actual/predicted-reduction acceptance test (Nocedal-Wright style). Costs
//!   two function values plus one first and one second derivative per
//!   iteration.
//! - `FixedTrustRegion`: Newton step clamped to a fixed radius (default `1/Z`,
//!   over which the surrogate's exponential changes by at most a factor `e`,
//!   keeping the quadratic model honest), every step applied. Costs exactly
//!   one first derivative, one second derivative, and the two clamp
//!   comparisons per iteration - no function values.
//!
//! Convergence is on the projected gradient: at `x > 0` it is `psi'(x)`, at
//! the boundary it is `min(psi'(0), 0)`.

use core::fmt;

use crate::math;
use crate::surrogates::{data_surrogate_eval, RegSurrogate1D};

/// Curvature floor used when forming Newton steps.
pub const HESSIAN_FLOOR: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Newton,
    TrustRegion,
    FixedTrustRegion,
}

/// Solver configuration as read from user input; radii left `None` default to
/// `1/Z` of the problem at hand (see [`Solver1DConfig::resolve`]).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Solver1DConfig {
    pub method: Method,
    /// Relative projected-gradient tolerance; the absolute threshold is
    /// `grad_tol * (1 + |psi'(x0)|)`.
    pub grad_tol: f64,
    pub max_iters: u32,
    pub tr_initial_radius: Option<f64>,
    pub tr_fixed_radius: Option<f64>,
    /// Step acceptance threshold on the reduction ratio.
    pub tr_eta: f64,
    pub tr_expand: f64,
    pub tr_shrink: f64,
}

impl Default for Solver1DConfig {
    fn default() -> Self {
        Solver1DConfig {
            method: Method::TrustRegion,
            grad_tol: 1e-9,
            max_iters: 50,
            tr_initial_radius: None,
            tr_fixed_radius: None,
            tr_eta: 0.1,
            tr_expand: 2.0,
            tr_shrink: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfigError(pub &'static str);

impl fmt::Display for SolverConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid solver config: {}", self.0)
    }
}

impl core::error::Error for SolverConfigError {}

impl Solver1DConfig {
    /// Fills in the problem-scale defaults (`default_radius` is typically
    /// `1/Z`) and validates.
    pub fn resolve(&self, default_radius: f64) -> Result<SolverParams, SolverConfigError> {
        if !(self.grad_tol > 0.0) {
            return Err(SolverConfigError("grad_tol must be > 0"));
        }
        if self.max_iters == 0 {
            return Err(SolverConfigError("max_iters must be >= 1"));
        }
        if !(self.tr_eta > 0.0 && self.tr_eta < 1.0) {
            return Err(SolverConfigError("tr_eta must be in (0, 1)"));
        }
        if !(self.tr_shrink < 1.0 && self.tr_shrink > 0.0) {
            return Err(SolverConfigError("tr_shrink must be in (0, 1)"));
        }
        if !(self.tr_expand > 1.0) {
            return Err(SolverConfigError("tr_expand must be > 1"));
        }
        let initial = self.tr_initial_radius.unwrap_or(default_radius);
        let fixed = self.tr_fixed_radius.unwrap_or(default_radius);
        if !(initial > 0.0) || !(fixed > 0.0) {
            return Err(SolverConfigError("trust-region radii must be > 0"));
        }
        Ok(SolverParams {
            method: self.method,
            grad_tol: self.grad_tol,
            max_iters: self.max_iters,
            tr_initial_radius: initial,
            tr_fixed_radius: fixed,
            tr_eta: self.tr_eta,
            tr_expand: self.tr_expand,
            tr_shrink: self.tr_shrink,
        })
    }
}

/// Fully resolved solver parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverParams {
    pub method: Method,
    pub grad_tol: f64,
    pub max_iters: u32,
    pub tr_initial_radius: f64,
    pub tr_fixed_radius: f64,
    pub tr_eta: f64,
    pub tr_expand: f64,
    pub tr_shrink: f64,
}

/// A twice-differentiable convex function of one variable.
///
/// `derivs` returns both derivatives from one evaluation (they share the
/// dominant exponential), and counts as one first-derivative plus one
/// second-derivative computation.
pub trait Objective1D {
    fn value(&self, x: f64) -> f64;
    fn derivs(&self, x: f64) -> (f64, f64);
}

/// The per-pixel surrogate `b (x - xh) + (bh/Z) e^{-Z(x-xh)} + reg(x)`.
#[derive(Clone, Debug)]
pub struct VoxelObjective<'a> {
    pub b_lin: f64,
    pub b_exp: f64,
    pub z: f64,
    pub x_hat: f64,
    pub reg: Option<RegSurrogate1D<'a>>,
}

impl<'a> VoxelObjective<'a> {
    pub fn unregularized(b_lin: f64, b_exp: f64, z: f64, x_hat: f64) -> Self {
        VoxelObjective {
            b_lin,
            b_exp,
            z,
            x_hat,
            reg: None,
        }
    }
}

impl<'a> Objective1D for VoxelObjective<'a> {
    fn value(&self, x: f64) -> f64 {
        let (v, _, _) = data_surrogate_eval(self.b_lin, self.b_exp, self.z, x, self.x_hat);
        match &self.reg {
            Some(r) => v + r.eval(x).0,
            None => v,
        }
    }

    fn derivs(&self, x: f64) -> (f64, f64) {
        let (_, d1, d2) = data_surrogate_eval(self.b_lin, self.b_exp, self.z, x, self.x_hat);
        match &self.reg {
            Some(r) => {
                let (_, rd1, rd2) = r.eval(x);
                (d1 + rd1, d2 + rd2)
            }
            None => (d1, d2),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIters,
    /// A NaN or infinity appeared while evaluating the objective; callers
    /// should fall back to the start point (which `x` is set to).
    NumericalFailure,
}

#[derive(Clone, Copy, Debug)]
pub struct Solve1D {
    pub x: f64,
    pub iters: u32,
    pub status: SolveStatus,
}

/// The clamped Newton step `clamp(-d1 / max(d2, floor), -radius, +radius)`.
pub fn trust_region_step(d1: f64, d2: f64, radius: f64) -> f64 {
    let newton = -d1 / d2.max(HESSIAN_FLOOR);
    if newton < -radius {
        -radius
    } else if newton > radius {
        radius
    } else {
        newton
    }
}

#[inline]
fn projected_gradient(x: f64, d1: f64) -> f64 {
    if x > 0.0 {
        d1
    } else {
        d1.min(0.0)
    }
}

/// Minimizes a convex `psi` over `x >= 0` starting from `x0 >= 0`.
pub fn minimize_1d(f: &impl Objective1D, x0: f64, params: &SolverParams) -> Solve1D {
    debug_assert!(x0 >= 0.0);
    match params.method {
        Method::Newton => newton_loop(f, x0, params, None),
        Method::FixedTrustRegion => newton_loop(f, x0, params, Some(params.tr_fixed_radius)),
        Method::TrustRegion => trust_region_loop(f, x0, params),
    }
}

/// Projected Newton iteration, optionally step-clamped to a fixed radius.
/// Exactly one `derivs` evaluation per iteration and no function values.
fn newton_loop(
    f: &impl Objective1D,
    x0: f64,
    params: &SolverParams,
    radius: Option<f64>,
) -> Solve1D {
    let mut x = x0;
    let mut best_x = x0;
    let mut best_pg = f64::INFINITY;
    let mut tol = 0.0;
    let mut iters = 0;
    loop {
        if iters >= params.max_iters {
            return Solve1D {
                x: best_x,
                iters,
                status: SolveStatus::MaxIters,
            };
        }
        let (d1, d2) = f.derivs(x);
        if !d1.is_finite() || !d2.is_finite() {
            return Solve1D {
                x: x0,
                iters,
                status: SolveStatus::NumericalFailure,
            };
        }
        if iters == 0 {
            tol = params.grad_tol * (1.0 + math::abs(d1));
        }
        let pg = projected_gradient(x, d1);
        if math::abs(pg) < best_pg {
            best_pg = math::abs(pg);
            best_x = x;
        }
        if math::abs(pg) <= tol {
            return Solve1D {
                x,
                iters,
                status: SolveStatus::Converged,
            };
        }
        let step = match radius {
            Some(r) => trust_region_step(d1, d2, r),
            None => -d1 / d2.max(HESSIAN_FLOOR),
        };
        x = (x + step).max(0.0);
        if !x.is_finite() {
            return Solve1D {
                x: x0,
                iters,
                status: SolveStatus::NumericalFailure,
            };
        }
        iters += 1;
    }
}

/// Adaptive trust region: accept on reduction ratio `rho > eta`, shrink the
/// radius when the quadratic model is poor, expand it when the model is good
/// and the step hit the boundary.
fn trust_region_loop(f: &impl Objective1D, x0: f64, params: &SolverParams) -> Solve1D {
    let mut x = x0;
    let mut radius = params.tr_initial_radius;
    let mut v_cur = f.value(x);
    if !v_cur.is_finite() {
        return Solve1D {
            x: x0,
            iters: 0,
            status: SolveStatus::NumericalFailure,
        };
    }
    let (mut d1, mut d2) = f.derivs(x);
    if !d1.is_finite() || !d2.is_finite() {
        return Solve1D {
            x: x0,
            iters: 0,
            status: SolveStatus::NumericalFailure,
        };
    }
    let tol = params.grad_tol * (1.0 + math::abs(d1));
    let mut iters = 0;
    loop {
        let pg = projected_gradient(x, d1);
        if math::abs(pg) <= tol {
            return Solve1D {
                x,
                iters,
                status: SolveStatus::Converged,
            };
        }
        if iters >= params.max_iters {
            // iterates are monotone by construction; current x is the best
            return Solve1D {
                x,
                iters,
                status: SolveStatus::MaxIters,
            };
        }
        let step = trust_region_step(d1, d2, radius);
        let x_trial = (x + step).max(0.0);
        let s = x_trial - x;
        if s == 0.0 {
            // only reachable through radius underflow
            return Solve1D {
                x,
                iters,
                status: SolveStatus::MaxIters,
            };
        }
        let predicted = -(d1 * s + 0.5 * d2 * s * s);
        let v_trial = f.value(x_trial);
        if !v_trial.is_finite() {
            return Solve1D {
                x: x0,
                iters,
                status: SolveStatus::NumericalFailure,
            };
        }
        iters += 1;
        if predicted <= 0.0 {
            radius *= params.tr_shrink;
            continue;
        }
        // Below value roundoff the reduction ratio is meaningless; the step is
        // an interior Newton step at that point, so take it.
        if predicted <= 4.0 * f64::EPSILON * (1.0 + math::abs(v_cur)) {
            x = x_trial;
            v_cur = v_trial;
            let (nd1, nd2) = f.derivs(x);
            if !nd1.is_finite() || !nd2.is_finite() {
                return Solve1D {
                    x: x0,
                    iters,
                    status: SolveStatus::NumericalFailure,
                };
            }
            d1 = nd1;
            d2 = nd2;
            continue;
        }
        let rho = (v_cur - v_trial) / predicted;
        let hit_boundary = math::abs(step) >= radius * (1.0 - 1e-12);
        if rho < 0.25 {
            radius *= params.tr_shrink;
        } else if rho > 0.75 && hit_boundary {
            radius *= params.tr_expand;
        }
        if rho > params.tr_eta {
            x = x_trial;
            v_cur = v_trial;
            let (nd1, nd2) = f.derivs(x);
            if !nd1.is_finite() || !nd2.is_finite() {
                return Solve1D {
                    x: x0,
                    iters,
                    status: SolveStatus::NumericalFailure,
                };
            }
            d1 = nd1;
            d2 = nd2;
        }
    }
}
