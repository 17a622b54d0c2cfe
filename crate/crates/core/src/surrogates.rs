//! Separable Jensen surrogates for the data-fit and regularizer terms.
//!
//! With auxiliary weights `r_ij = h_ij / Z`, `Z = max_i sum_j h_ij`, Jensen's
//! inequality turns the composite data-fit term into a pixel-separable
//! majorizer (constant terms dropped):
//!
//! ```text
//! g(x; xh) = sum_j b_j (x_j - xh_j) + (bh_j / Z) exp(-Z (x_j - xh_j)),
//! b_j  = sum_i d_i h_ij,      bh_j = sum_i qh_i h_ij,
//! qh_i = I0_i exp(-(H xh)_i).
//! ```
//!
//! The row sums satisfy `sum_j r_ij <= 1` by the choice of `Z`; the leftover
//! Jensen mass sits at the expansion point and only shifts the dropped
//! constant. For the regularizer, splitting each difference row with weights
//! 1/2 per entry gives the separable majorizer of the directed-pair penalty
//!
//! ```text
//! B(x; xh) = sum_j sum_{j' in N_j} w_jj' delta^2 rho((2 x_j - xh_j - xh_j')/delta),
//! rho(u) = |u| - log(1 + |u|),
//! ```
//!
//! where the unit coefficient per directed pair is what makes `B` majorize
//! the doubly-counted penalty with matching gradient at the expansion point.
//! Minimizing `g + lambda_scale * B` decouples into one convex 1-D problem
//! per pixel; with `lambda = 0` the minimizer is closed-form.

use alloc::vec::Vec;

use crate::math;
use crate::model::{huber_log, huber_log_d1, ModelError, NeighborhoodSystem, ReconProblem, RegularizerParams};

/// Floor used when the linear coefficient vanishes and the surrogate has no
/// finite minimizer; the update is capped at `xh + ln(bh / B_FLOOR) / Z`.
pub const B_FLOOR: f64 = 1e-12;

/// Precomputed per-pixel surrogate coefficients at one expansion point.
#[derive(Clone, Debug)]
pub struct DataSurrogateCoeffs {
    /// `b_j = sum_i d_i h_ij` (fixed across iterations).
    pub b: Vec<f64>,
    /// `bh_j = sum_i qh_i h_ij` at the expansion point.
    pub b_hat: Vec<f64>,
    /// Jensen normalizer `Z`.
    pub z: f64,
}

impl DataSurrogateCoeffs {
    pub fn new(b: Vec<f64>, b_hat: Vec<f64>, z: f64) -> Result<Self, ModelError> {
        if b.len() != b_hat.len() {
            return Err(ModelError::DimensionMismatch {
                what: "surrogate coefficient length",
                expected: b.len(),
                got: b_hat.len(),
            });
        }
        if !(z > 0.0) || !z.is_finite() {
            return Err(ModelError::InvalidData("Z must be finite and > 0"));
        }
        if b.iter().any(|&v| v < 0.0) || b_hat.iter().any(|&v| v < 0.0) {
            return Err(ModelError::InvalidData(
                "surrogate coefficients must be >= 0",
            ));
        }
        Ok(DataSurrogateCoeffs { b, b_hat, z })
    }

    /// Builds the full-data coefficients at expansion point `x_hat`.
    pub fn from_problem(problem: &ReconProblem, x_hat: &[f64]) -> Result<Self, ModelError> {
        let z = problem.matrix.max_row_sum()?;
        let b = problem.matrix.back_project(problem.data.d())?;
        let l = problem.matrix.forward_project(x_hat)?;
        let q: Vec<f64> = (0..l.len())
            .map(|i| problem.data.i0()[i] * math::exp(-l[i]))
            .collect();
        let b_hat = problem.matrix.back_project(&q)?;
        DataSurrogateCoeffs::new(b, b_hat, z)
    }
}

/// One pixel's data surrogate and its derivatives in `x`:
/// `value = b (x - xh) + (bh/Z) exp(-Z (x - xh))`.
///
/// `d2 > 0` whenever `bh > 0`; with `bh = 0` the surrogate degenerates to the
/// linear function `b (x - xh)`.
pub fn data_surrogate_eval(b_j: f64, b_hat_j: f64, z: f64, x: f64, x_hat: f64) -> (f64, f64, f64) {
    let e = math::exp(-z * (x - x_hat));
    let value = b_j * (x - x_hat) + b_hat_j / z * e;
    let d1 = b_j - b_hat_j * e;
    let d2 = z * b_hat_j * e;
    (value, d1, d2)
}

/// The regularizer surrogate restricted to one pixel: expansion value,
/// frozen neighbor values, weights, and the scale applied to the penalty
/// (`lambda` for full/averaged schemes, `lambda / B` for ordered subsets).
#[derive(Clone, Debug)]
pub struct RegSurrogate1D<'a> {
    x_hat_j: f64,
    neighbor_idx: &'a [u32],
    neighbor_w: &'a [f64],
    x_hat: &'a [f64],
    delta: f64,
    lambda_scale: f64,
}

impl<'a> RegSurrogate1D<'a> {
    pub fn new(
        neighborhood: &'a NeighborhoodSystem,
        x_hat: &'a [f64],
        j: usize,
        delta: f64,
        lambda_scale: f64,
    ) -> Self {
        let (neighbor_idx, neighbor_w) = neighborhood.neighbor_slices(j);
        RegSurrogate1D {
            x_hat_j: x_hat[j],
            neighbor_idx,
            neighbor_w,
            x_hat,
            delta,
            lambda_scale,
        }
    }

    /// Value and first two derivatives in `x`:
    /// `lambda_scale * sum_{j'} w delta^2 rho((2x - xh_j - xh_j')/delta)`.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let mut value = 0.0;
        let mut d1 = 0.0;
        let mut d2 = 0.0;
        for (&j2, &w) in self.neighbor_idx.iter().zip(self.neighbor_w) {
            let t = 2.0 * x - self.x_hat_j - self.x_hat[j2 as usize];
            let a = math::abs(t / self.delta);
            value += w * self.delta * self.delta * (a - math::ln_1p(a));
            d1 += 2.0 * w * t / (1.0 + a);
            let c = 1.0 + a;
            d2 += 4.0 * w / (c * c);
        }
        (
            self.lambda_scale * value,
            self.lambda_scale * d1,
            self.lambda_scale * d2,
        )
    }

    pub fn lambda_scale(&self) -> f64 {
        self.lambda_scale
    }
}

/// How a closed-form update resolved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClosedFormOutcome {
    /// Interior minimizer `xh - ln(b/bh)/Z`.
    Interior,
    /// Raw minimizer was negative; clamped to zero.
    ClampedToZero,
    /// `bh = 0, b > 0`: the surrogate is increasing, minimizer is 0.
    DegenerateBhatZero,
    /// `b = 0, bh > 0`: no finite minimizer; capped at `xh + ln(bh/B_FLOOR)/Z`.
    DegenerateBZero,
    /// `b = bh = 0`: constant surrogate; expansion point returned.
    Indeterminate,
}

impl ClosedFormOutcome {
    pub fn is_degenerate(self) -> bool {
        matches!(
            self,
            ClosedFormOutcome::DegenerateBhatZero
                | ClosedFormOutcome::DegenerateBZero
                | ClosedFormOutcome::Indeterminate
        )
    }
}

/// Exact nonnegative minimizer of the unregularized surrogate:
/// `[ xh - ln(b / bh) / Z ]_+`, with the degenerate coefficient cases
/// resolved as flagged outcomes.
pub fn closed_form_update(b_j: f64, b_hat_j: f64, z: f64, x_hat_j: f64) -> (f64, ClosedFormOutcome) {
    if b_hat_j == 0.0 {
        if b_j == 0.0 {
            return (x_hat_j, ClosedFormOutcome::Indeterminate);
        }
        return (0.0, ClosedFormOutcome::DegenerateBhatZero);
    }
    if b_j == 0.0 {
        let capped = x_hat_j + math::ln(b_hat_j / B_FLOOR) / z;
        return (capped.max(0.0), ClosedFormOutcome::DegenerateBZero);
    }
    let raw = x_hat_j - math::ln(b_j / b_hat_j) / z;
    if raw < 0.0 {
        (0.0, ClosedFormOutcome::ClampedToZero)
    } else {
        (raw, ClosedFormOutcome::Interior)
    }
}

/// Outcome of [`surrogate_majorization_check`]: signed inequality margins
/// (nonnegative means the majorization holds) and gradient tangency errors
/// relative to the gradient's max norm.
#[derive(Clone, Copy, Debug)]
pub struct MajorizationReport {
    /// `[g(x;xh) - g(xh;xh)] - [f(x) - f(xh)]`.
    pub data_gap: f64,
    /// Max-norm-relative deviation between the surrogate and objective
    /// gradients of the data term at `xh`.
    pub data_tangency_err: f64,
    /// `[B(x;xh) - B(xh;xh)] - [beta(x) - beta(xh)]`.
    pub reg_gap: f64,
    /// Same as `data_tangency_err`, for the regularizer pair.
    pub reg_tangency_err: f64,
    /// `f(x)` and `beta(x)`, for tolerance scaling by the caller.
    pub datafit_at_x: f64,
    pub penalty_at_x: f64,
}

pub const MAJORIZATION_GAP_TOL: f64 = 1e-9;
pub const TANGENCY_TOL: f64 = 1e-8;

impl MajorizationReport {
    pub fn data_ok(&self) -> bool {
        self.data_gap >= -MAJORIZATION_GAP_TOL * (1.0 + math::abs(self.datafit_at_x))
            && self.data_tangency_err <= TANGENCY_TOL
    }

    pub fn reg_ok(&self) -> bool {
        self.reg_gap >= -MAJORIZATION_GAP_TOL * (1.0 + math::abs(self.penalty_at_x))
            && self.reg_tangency_err <= TANGENCY_TOL
    }

    pub fn passed(&self) -> bool {
        self.data_ok() && self.reg_ok()
    }
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, &b| a.max(math::abs(b)))
}

/// Numerically verifies, at one `(x, xh)` pair, that both surrogates majorize
/// their objective terms up to the dropped constants and are gradient-tangent
/// at the expansion point.
pub fn surrogate_majorization_check(
    problem: &ReconProblem,
    reg: &RegularizerParams,
    x: &[f64],
    x_hat: &[f64],
) -> Result<MajorizationReport, ModelError> {
    let coeffs = DataSurrogateCoeffs::from_problem(problem, x_hat)?;
    let n = problem.n_voxels();
    if x.len() != n {
        return Err(ModelError::DimensionMismatch {
            what: "image length",
            expected: n,
            got: x.len(),
        });
    }

    // data term: g(x;xh) - g(xh;xh) vs f(x) - f(xh)
    let mut g_diff = 0.0;
    for j in 0..n {
        let dx = x[j] - x_hat[j];
        g_diff += coeffs.b[j] * dx + coeffs.b_hat[j] / coeffs.z * (math::exp(-coeffs.z * dx) - 1.0);
    }
    let f_x = problem.datafit(x)?;
    let f_xh = problem.datafit(x_hat)?;
    let data_gap = g_diff - (f_x - f_xh);

    // gradient tangency: grad g(xh) = b - bh vs grad f(xh) = H^T (d - qh)
    let grad_f = {
        let reg0 = RegularizerParams::new(0.0, reg.delta)?;
        problem.gradient(x_hat, &reg0)?
    };
    let scale = 1.0 + max_norm(&grad_f);
    let mut data_tangency_err = 0.0f64;
    for j in 0..n {
        let dev = math::abs((coeffs.b[j] - coeffs.b_hat[j]) - grad_f[j]) / scale;
        data_tangency_err = data_tangency_err.max(dev);
    }

    // regularizer: B(x;xh) - B(xh;xh) vs beta(x) - beta(xh), lambda-free
    let nbhd = &problem.neighborhood;
    let mut b_diff = 0.0;
    let mut grad_b = alloc::vec![0.0; n];
    for j in 0..n {
        let rs = RegSurrogate1D::new(nbhd, x_hat, j, reg.delta, 1.0);
        let (vx, _, _) = rs.eval(x[j]);
        let (vh, d1h, _) = rs.eval(x_hat[j]);
        b_diff += vx - vh;
        grad_b[j] = d1h;
    }
    let beta_x = nbhd.penalty(x, reg.delta);
    let beta_xh = nbhd.penalty(x_hat, reg.delta);
    let reg_gap = b_diff - (beta_x - beta_xh);

    let mut grad_beta = alloc::vec![0.0; n];
    nbhd.penalty_gradient_into(x_hat, reg.delta, &mut grad_beta);
    let scale_b = 1.0 + max_norm(&grad_beta);
    let mut reg_tangency_err = 0.0f64;
    for j in 0..n {
        let dev = math::abs(grad_b[j] - grad_beta[j]) / scale_b;
        reg_tangency_err = reg_tangency_err.max(dev);
    }

    Ok(MajorizationReport {
        data_gap,
        data_tangency_err,
        reg_gap,
        reg_tangency_err,
        datafit_at_x: f_x,
        penalty_at_x: beta_x,
    })
}

/// `beta` surrogate term for one directed pair, exposed for tests that need
/// the raw 1-D formula.
pub fn reg_pair_surrogate(x: f64, x_hat_j: f64, x_hat_j2: f64, weight: f64, delta: f64) -> f64 {
    huber_log(2.0 * x - x_hat_j - x_hat_j2, weight, delta)
}

/// Directional consistency helper: the penalty-derivative identity
/// `d/dx huber_log(2x - a - b) = 2 * huber_log_d1(2x - a - b)`.
pub fn reg_pair_surrogate_d1(x: f64, x_hat_j: f64, x_hat_j2: f64, weight: f64, delta: f64) -> f64 {
    2.0 * huber_log_d1(2.0 * x - x_hat_j - x_hat_j2, weight, delta)
}
