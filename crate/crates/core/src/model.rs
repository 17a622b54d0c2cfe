//! The reconstruction objective `Phi(x) = f(x) + lambda * beta(x)`.
//!
//! `f` is the Poisson transmission negative log-likelihood, summed over rays:
//! `f_i(l) = d_i l + I0_i exp(-l)` at the line integral `l = (Hx)_i`.
//! `beta` is a Huber-log penalty over directed neighbor pairs:
//! `beta(x) = sum_j sum_{j' in N_j} w_jj' delta^2 (|t/delta| - log(1+|t/delta|))`
//! with `t = x_j - x_j'`. The neighborhood is symmetric, so every unordered
//! pair is counted once per direction; the gradient consequently carries a
//! factor 2 per unordered pair.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math;
use crate::projector::{ProjectorError, SparseSystemMatrix};

#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    InvalidData(&'static str),
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    NegativeVoxel {
        index: usize,
        value: f64,
    },
    Projector(ProjectorError),
    PowerIterationNoConvergence {
        last_estimate: f64,
        iterations: u32,
    },
    DegenerateOperator,
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::InvalidData(msg) => write!(f, "invalid data: {msg}"),
            ModelError::DimensionMismatch {
                what,
                expected,
                got,
            } => write!(f, "dimension mismatch for {what}: expected {expected}, got {got}"),
            ModelError::NegativeVoxel { index, value } => {
                write!(f, "voxel {index} is negative ({value})")
            }
            ModelError::Projector(e) => write!(f, "{e}"),
            ModelError::PowerIterationNoConvergence {
                last_estimate,
                iterations,
            } => write!(
                f,
                "power iteration did not converge after {iterations} iterations (last estimate {last_estimate})"
            ),
            ModelError::DegenerateOperator => {
                write!(f, "power iteration operator annihilated the start vector")
            }
        }
    }
}

impl core::error::Error for ModelError {}

impl From<ProjectorError> for ModelError {
    fn from(e: ProjectorError) -> Self {
        ModelError::Projector(e)
    }
}

/// Measured (attenuated) counts `d` and incident counts `I0`, one per ray.
#[derive(Clone, Debug, PartialEq)]
pub struct PoissonData {
    d: Vec<f64>,
    i0: Vec<f64>,
}

impl PoissonData {
    pub fn new(d: Vec<f64>, i0: Vec<f64>) -> Result<Self, ModelError> {
        if d.len() != i0.len() {
            return Err(ModelError::DimensionMismatch {
                what: "incident counts length",
                expected: d.len(),
                got: i0.len(),
            });
        }
        if !d.iter().all(|&v| v >= 0.0 && v.is_finite()) {
            return Err(ModelError::InvalidData("counts must be finite and >= 0"));
        }
        if !i0.iter().all(|&v| v > 0.0 && v.is_finite()) {
            return Err(ModelError::InvalidData(
                "incident counts must be finite and > 0",
            ));
        }
        Ok(PoissonData { d, i0 })
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn i0(&self) -> &[f64] {
        &self.i0
    }

    pub fn max_i0(&self) -> f64 {
        let mut m = 0.0;
        for &v in &self.i0 {
            if v > m {
                m = v;
            }
        }
        m
    }
}

/// Per-ray data-fit term `d_i l + I0_i exp(-l)`; strictly convex in `l`.
pub fn datafit_term(l: f64, d_i: f64, i0_i: f64) -> f64 {
    d_i * l + i0_i * math::exp(-l)
}

/// Huber-log penalty `w * delta^2 * (|t/delta| - log(1 + |t/delta|))`.
///
/// Even, zero at the origin, quadratic for `|t| << delta` and linear for
/// `|t| >> delta`.
pub fn huber_log(t: f64, weight: f64, delta: f64) -> f64 {
    let a = math::abs(t / delta);
    weight * delta * delta * (a - math::ln_1p(a))
}

/// First derivative of [`huber_log`]: `w * t / (1 + |t/delta|)`.
pub fn huber_log_d1(t: f64, weight: f64, delta: f64) -> f64 {
    weight * t / (1.0 + math::abs(t / delta))
}

/// Second derivative of [`huber_log`]: `w / (1 + |t/delta|)^2`, bounded by `w`.
pub fn huber_log_d2(t: f64, weight: f64, delta: f64) -> f64 {
    let c = 1.0 + math::abs(t / delta);
    weight / (c * c)
}

/// Regularizer parameters: strength `lambda >= 0` and the Huber knee
/// `delta > 0` (same units as pixel differences, mm^-1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegularizerParams {
    pub lambda: f64,
    pub delta: f64,
}

impl RegularizerParams {
    pub fn new(lambda: f64, delta: f64) -> Result<Self, ModelError> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(ModelError::InvalidData("lambda must be finite and >= 0"));
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(ModelError::InvalidData("delta must be finite and > 0"));
        }
        Ok(RegularizerParams { lambda, delta })
    }
}

/// Symmetric pixel neighborhood with positive weights.
///
/// Stored per pixel as (neighbor index, weight) lists. Symmetry (`j' in N_j`
/// iff `j in N_j'`, equal weights) is guaranteed by the constructors; it is
/// what makes the directed-pair penalty equal twice the unordered-pair sum.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborhoodSystem {
    n_voxels: usize,
    offsets: Vec<usize>,
    idx: Vec<u32>,
    weight: Vec<f64>,
}

impl NeighborhoodSystem {
    /// 4-connected grid neighborhood, unit weights.
    pub fn four_connected(n_rows: usize, n_cols: usize) -> Self {
        Self::grid(n_rows, n_cols, false)
    }

    /// 8-connected grid neighborhood: unit axial weights, `1/sqrt(2)` on
    /// diagonals (inverse center distance).
    pub fn eight_connected(n_rows: usize, n_cols: usize) -> Self {
        Self::grid(n_rows, n_cols, true)
    }

    fn grid(n_rows: usize, n_cols: usize, diagonals: bool) -> Self {
        assert!(n_rows >= 1 && n_cols >= 1);
        let n = n_rows * n_cols;
        let mut offsets = Vec::with_capacity(n + 1);
        let mut idx = Vec::new();
        let mut weight = Vec::new();
        offsets.push(0);
        let diag_w = 1.0 / math::sqrt(2.0);
        let steps: &[(isize, isize, f64)] = if diagonals {
            &[
                (-1, -1, 0.0),
                (-1, 0, 1.0),
                (-1, 1, 0.0),
                (0, -1, 1.0),
                (0, 1, 1.0),
                (1, -1, 0.0),
                (1, 0, 1.0),
                (1, 1, 0.0),
            ]
        } else {
            &[(-1, 0, 1.0), (0, -1, 1.0), (0, 1, 1.0), (1, 0, 1.0)]
        };
        for r in 0..n_rows as isize {
            for c in 0..n_cols as isize {
                for &(dr, dc, w) in steps {
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nr >= n_rows as isize || nc < 0 || nc >= n_cols as isize {
                        continue;
                    }
                    let w = if w == 0.0 { diag_w } else { w };
                    idx.push((nr * n_cols as isize + nc) as u32);
                    weight.push(w);
                }
                offsets.push(idx.len());
            }
        }
        NeighborhoodSystem {
            n_voxels: n,
            offsets,
            idx,
            weight,
        }
    }

    /// Builds from unordered pairs `(a, b, weight)`; both directions are
    /// inserted, so the symmetry invariant holds by construction.
    pub fn from_pairs(n_voxels: usize, pairs: &[(usize, usize, f64)]) -> Result<Self, ModelError> {
        let mut adjacency: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n_voxels];
        for &(a, b, w) in pairs {
            if a >= n_voxels || b >= n_voxels {
                return Err(ModelError::InvalidData("neighbor index out of range"));
            }
            if a == b {
                return Err(ModelError::InvalidData("self-neighbors are not allowed"));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(ModelError::InvalidData(
                    "neighbor weights must be finite and > 0",
                ));
            }
            if adjacency[a].iter().any(|&(j, _)| j as usize == b) {
                return Err(ModelError::InvalidData("duplicate neighbor pair"));
            }
            adjacency[a].push((b as u32, w));
            adjacency[b].push((a as u32, w));
        }
        let mut offsets = Vec::with_capacity(n_voxels + 1);
        let mut idx = Vec::new();
        let mut weight = Vec::new();
        offsets.push(0);
        for list in adjacency {
            for (j, w) in list {
                idx.push(j);
                weight.push(w);
            }
            offsets.push(idx.len());
        }
        Ok(NeighborhoodSystem {
            n_voxels,
            offsets,
            idx,
            weight,
        })
    }

    pub fn n_voxels(&self) -> usize {
        self.n_voxels
    }

    /// Number of directed pairs, i.e. the row count of the difference
    /// matrix C.
    pub fn n_directed_pairs(&self) -> usize {
        self.idx.len()
    }

    pub fn max_weight(&self) -> f64 {
        let mut m = 0.0;
        for &w in &self.weight {
            if w > m {
                m = w;
            }
        }
        m
    }

    /// Neighbor (index, weight) slices of pixel `j`.
    pub fn neighbor_slices(&self, j: usize) -> (&[u32], &[f64]) {
        let lo = self.offsets[j];
        let hi = self.offsets[j + 1];
        (&self.idx[lo..hi], &self.weight[lo..hi])
    }

    pub fn neighbors(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (idx, w) = self.neighbor_slices(j);
        idx.iter().zip(w).map(|(&j2, &w2)| (j2 as usize, w2))
    }

    /// Applies `C^T C` (twice the weighted-graph Laplacian structure with
    /// unit entries): `out_j = 2 * sum_{j' in N_j} (v_j - v_j')`.
    ///
    /// The weights do not appear here; the Hessian bound folds them into
    /// `lambda_eff = lambda * max_k w_k`.
    pub fn ctc_apply(&self, v: &[f64], out: &mut [f64]) {
        for j in 0..self.n_voxels {
            let (idx, _) = self.neighbor_slices(j);
            let mut acc = 0.0;
            for &j2 in idx {
                acc += v[j] - v[j2 as usize];
            }
            out[j] = 2.0 * acc;
        }
    }

    /// `beta(x)`: Huber-log summed over directed pairs (each unordered pair
    /// counted twice).
    pub fn penalty(&self, x: &[f64], delta: f64) -> f64 {
        let mut acc = 0.0;
        for j in 0..self.n_voxels {
            let (idx, w) = self.neighbor_slices(j);
            for (&j2, &wk) in idx.iter().zip(w) {
                acc += huber_log(x[j] - x[j2 as usize], wk, delta);
            }
        }
        acc
    }

    /// `grad beta(x)`, unscaled by lambda:
    /// `g_j = 2 * sum_{j' in N_j} huber_log_d1(x_j - x_j')`.
    pub fn penalty_gradient_into(&self, x: &[f64], delta: f64, out: &mut [f64]) {
        for j in 0..self.n_voxels {
            let (idx, w) = self.neighbor_slices(j);
            let mut acc = 0.0;
            for (&j2, &wk) in idx.iter().zip(w) {
                acc += huber_log_d1(x[j] - x[j2 as usize], wk, delta);
            }
            out[j] = 2.0 * acc;
        }
    }
}

/// A reconstruction instance: system matrix, measurements, and neighborhood.
/// Regularizer parameters are passed per call so one instance can serve
/// several configurations.
#[derive(Clone, Debug)]
pub struct ReconProblem {
    pub matrix: SparseSystemMatrix,
    pub data: PoissonData,
    pub neighborhood: NeighborhoodSystem,
}

impl ReconProblem {
    pub fn new(
        matrix: SparseSystemMatrix,
        data: PoissonData,
        neighborhood: NeighborhoodSystem,
    ) -> Result<Self, ModelError> {
        if data.len() != matrix.m() {
            return Err(ModelError::DimensionMismatch {
                what: "measurement count",
                expected: matrix.m(),
                got: data.len(),
            });
        }
        if neighborhood.n_voxels() != matrix.n() {
            return Err(ModelError::DimensionMismatch {
                what: "neighborhood size",
                expected: matrix.n(),
                got: neighborhood.n_voxels(),
            });
        }
        Ok(ReconProblem {
            matrix,
            data,
            neighborhood,
        })
    }

    pub fn n_voxels(&self) -> usize {
        self.matrix.n()
    }

    pub fn n_rays(&self) -> usize {
        self.matrix.m()
    }

    fn check_image(&self, x: &[f64]) -> Result<(), ModelError> {
        if x.len() != self.matrix.n() {
            return Err(ModelError::DimensionMismatch {
                what: "image length",
                expected: self.matrix.n(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Data-fit term only: `f(x) = sum_i d_i l_i + I0_i exp(-l_i)`.
    pub fn datafit(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.check_image(x)?;
        let l = self.matrix.forward_project(x)?;
        let mut acc = 0.0;
        for i in 0..l.len() {
            acc += datafit_term(l[i], self.data.d()[i], self.data.i0()[i]);
        }
        Ok(acc)
    }

    /// Full objective `Phi(x) = f(x) + lambda * beta(x)` for `x >= 0`.
    pub fn objective(&self, x: &[f64], reg: &RegularizerParams) -> Result<f64, ModelError> {
        self.check_image(x)?;
        if let Some((index, &value)) = x.iter().enumerate().find(|&(_, &v)| v < 0.0) {
            return Err(ModelError::NegativeVoxel { index, value });
        }
        let mut phi = self.datafit(x)?;
        if reg.lambda > 0.0 {
            phi += reg.lambda * self.neighborhood.penalty(x, reg.delta);
        }
        Ok(phi)
    }

    /// `grad Phi(x) = H^T (d - qhat) + lambda * grad beta(x)` with
    /// `qhat_i = I0_i exp(-(Hx)_i)`.
    pub fn gradient(&self, x: &[f64], reg: &RegularizerParams) -> Result<Vec<f64>, ModelError> {
        self.check_image(x)?;
        let l = self.matrix.forward_project(x)?;
        let w: Vec<f64> = (0..l.len())
            .map(|i| self.data.d()[i] - self.data.i0()[i] * math::exp(-l[i]))
            .collect();
        let mut g = self.matrix.back_project(&w)?;
        if reg.lambda > 0.0 {
            let mut reg_grad = vec![0.0; g.len()];
            self.neighborhood
                .penalty_gradient_into(x, reg.delta, &mut reg_grad);
            for j in 0..g.len() {
                g[j] += reg.lambda * reg_grad[j];
            }
        }
        Ok(g)
    }

    /// Upper bound `L` on the spectral norm of the Hessian, from
    /// `max_i I0_i * H^T H + lambda * max_k w_k * C^T C`, via power iteration
    /// on the implicitly applied operator.
    ///
    /// Converges when successive Rayleigh quotients differ by less than `tol`
    /// relative; errors with the last estimate after `max_iters`.
    pub fn lipschitz_constant(
        &self,
        reg: &RegularizerParams,
        tol: f64,
        max_iters: u32,
    ) -> Result<f64, ModelError> {
        let n = self.matrix.n();
        let max_i0 = self.data.max_i0();
        let lambda_eff = reg.lambda * self.neighborhood.max_weight();
        let mut v = vec![1.0 / math::sqrt(n as f64); n];
        let mut ctc = vec![0.0; n];
        let mut rayleigh_prev = f64::NAN;
        let mut rayleigh = f64::NAN;
        for it in 0..max_iters {
            let hv = self.matrix.forward_project(&v)?;
            let mut w = self.matrix.back_project(&hv)?;
            if lambda_eff > 0.0 {
                self.neighborhood.ctc_apply(&v, &mut ctc);
            }
            let mut norm_sq = 0.0;
            let mut rq = 0.0;
            for j in 0..n {
                w[j] = max_i0 * w[j] + if lambda_eff > 0.0 { lambda_eff * ctc[j] } else { 0.0 };
                rq += v[j] * w[j];
                norm_sq += w[j] * w[j];
            }
            rayleigh = rq;
            if it > 0 {
                let scale = math::abs(rayleigh).max(f64::MIN_POSITIVE);
                if math::abs(rayleigh - rayleigh_prev) < tol * scale {
                    return Ok(rayleigh);
                }
            }
            rayleigh_prev = rayleigh;
            let norm = math::sqrt(norm_sq);
            if norm == 0.0 {
                return Err(ModelError::DegenerateOperator);
            }
            for j in 0..n {
                v[j] = w[j] / norm;
            }
        }
        Err(ModelError::PowerIterationNoConvergence {
            last_estimate: rayleigh,
            iterations: max_iters,
        })
    }
}
