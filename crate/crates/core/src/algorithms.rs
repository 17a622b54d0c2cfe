//! The iteration schemes: Full-JS, OS-JS, SA-JS, OSA-JS, Full-GD, OS-GD,
//! SA-GD.
//!
//! All schemes share the same three-phase iteration: forward project the
//! current estimate, back project attenuated-count residual information, and
//! update every pixel. The JS schemes minimize the separable Jensen surrogate
//! per pixel (closed form when the effective regularizer weight is zero); the
//! GD schemes take a projected gradient step with the conservative `1/L`
//! step size.
//!
//! Subset bookkeeping:
//! - ordered subsets (`OsJs`, `OsGd`) cycle `k = n mod B` and use only subset
//!   `k`'s back projections, with the regularizer scaled by `1/B` to keep the
//!   data/penalty balance.
//! - averaged schemes (`SaJs`, `OsaJs`, `SaGd`) store one back projection per
//!   subset and use the sum of all stored vectors each iteration, refreshing
//!   the chosen subset. The sum is maintained by subtract-old/add-new, 2N
//!   arithmetic operations per update, instead of the naive O(B*N) resum.
//! - `SaJs`/`SaGd` choose the subset uniformly at random from a seeded
//!   generator; `OsaJs` cycles.
//!
//! Work is accounted in effective data passes: a subset iteration costs
//! `1/B` of a pass, and the averaged schemes' memory initialization (one back
//! projection of every subset at `x0`) is charged one full pass. The
//! objective is evaluated for logging only at integer pass boundaries.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand_chacha::ChaCha8Rng;

use crate::math;
use crate::model::{ModelError, NeighborhoodSystem, ReconProblem, RegularizerParams};
use crate::par::map_indexed;
use crate::projector::{ProjectorError, SparseSystemMatrix, SubsetPartition};
use crate::rng::{stream_rng, uniform_index};
use crate::solver1d::{
    minimize_1d, SolveStatus, Solver1DConfig, SolverConfigError, SolverParams, VoxelObjective,
};
use crate::surrogates::{closed_form_update, RegSurrogate1D};

/// Default uniform starting image, mm^-1. Strictly positive so that the
/// initial back projections are nonzero and the closed-form update is
/// well-defined from the first iteration.
pub const DEFAULT_X0: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    FullJs,
    OsJs,
    SaJs,
    OsaJs,
    FullGd,
    OsGd,
    SaGd,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::FullJs,
        Scheme::OsJs,
        Scheme::SaJs,
        Scheme::OsaJs,
        Scheme::FullGd,
        Scheme::OsGd,
        Scheme::SaGd,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Scheme::FullJs => "full_js",
            Scheme::OsJs => "os_js",
            Scheme::SaJs => "sa_js",
            Scheme::OsaJs => "osa_js",
            Scheme::FullGd => "full_gd",
            Scheme::OsGd => "os_gd",
            Scheme::SaGd => "sa_gd",
        }
    }

    /// Full-data schemes run with exactly one subset.
    pub fn is_full(self) -> bool {
        matches!(self, Scheme::FullJs | Scheme::FullGd)
    }

    /// Schemes that keep per-subset back-projection memory.
    pub fn is_averaged(self) -> bool {
        matches!(self, Scheme::SaJs | Scheme::OsaJs | Scheme::SaGd)
    }

    /// Schemes that pick the subset at random (seeded).
    pub fn is_stochastic(self) -> bool {
        matches!(self, Scheme::SaJs | Scheme::SaGd)
    }

    pub fn is_gradient_descent(self) -> bool {
        matches!(self, Scheme::FullGd | Scheme::OsGd | Scheme::SaGd)
    }
}

impl core::str::FromStr for Scheme {
    type Err = AlgorithmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|sch| sch.label() == s)
            .ok_or(AlgorithmError::InvalidConfig("unknown scheme name"))
    }
}

/// Regularizer scale used inside the per-pixel solves and gradient steps:
/// ordered subsets divide lambda by the subset count, averaged and full
/// schemes keep it.
pub fn effective_lambda(scheme: Scheme, lambda: f64, n_subsets: usize) -> f64 {
    match scheme {
        Scheme::OsJs | Scheme::OsGd => lambda / n_subsets as f64,
        _ => lambda,
    }
}

/// `q_i = I0_i exp(-l_i)` elementwise.
pub fn attenuated_counts(i0: &[f64], l: &[f64]) -> Vec<f64> {
    debug_assert_eq!(i0.len(), l.len());
    i0.iter()
        .zip(l)
        .map(|(&i0i, &li)| i0i * math::exp(-li))
        .collect()
}

#[derive(Clone, Debug)]
pub struct AlgorithmConfig {
    pub scheme: Scheme,
    /// Subset count `B`; must be 1 for the full schemes.
    pub n_subsets: usize,
    pub reg: RegularizerParams,
    pub solver: Solver1DConfig,
    /// Run until this many effective data passes have been consumed.
    pub max_passes: u32,
    /// Seed for the stochastic schemes' subset choice.
    pub seed: u64,
}

impl AlgorithmConfig {
    pub fn validate(&self) -> Result<(), AlgorithmError> {
        if self.n_subsets == 0 {
            return Err(AlgorithmError::InvalidConfig("n_subsets must be >= 1"));
        }
        if self.scheme.is_full() && self.n_subsets != 1 {
            return Err(AlgorithmError::InvalidConfig(
                "full schemes require n_subsets = 1",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AlgorithmError {
    InvalidConfig(&'static str),
    MissingPartition,
    PartitionMismatch { expected: usize, got: usize },
    Model(ModelError),
    Projector(ProjectorError),
    Solver(SolverConfigError),
    /// A non-finite pixel appeared in the iterate.
    NonFinite { iteration: u64 },
}

impl fmt::Display for AlgorithmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlgorithmError::InvalidConfig(msg) => write!(f, "invalid algorithm config: {msg}"),
            AlgorithmError::MissingPartition => {
                write!(f, "subset scheme requires a ray partition")
            }
            AlgorithmError::PartitionMismatch { expected, got } => {
                write!(f, "partition has {got} subsets, config says {expected}")
            }
            AlgorithmError::Model(e) => write!(f, "{e}"),
            AlgorithmError::Projector(e) => write!(f, "{e}"),
            AlgorithmError::Solver(e) => write!(f, "{e}"),
            AlgorithmError::NonFinite { iteration } => {
                write!(f, "non-finite pixel value at iteration {iteration}")
            }
        }
    }
}

impl core::error::Error for AlgorithmError {}

impl From<ModelError> for AlgorithmError {
    fn from(e: ModelError) -> Self {
        AlgorithmError::Model(e)
    }
}

impl From<ProjectorError> for AlgorithmError {
    fn from(e: ProjectorError) -> Self {
        AlgorithmError::Projector(e)
    }
}

impl From<SolverConfigError> for AlgorithmError {
    fn from(e: SolverConfigError) -> Self {
        AlgorithmError::Solver(e)
    }
}

/// Per-subset back-projection memory with its running sum.
///
/// Invariant (checked after every update in debug builds): `running_sum`
/// equals the explicit sum of the stored vectors to 1e-9 relative.
#[derive(Clone, Debug)]
pub struct AverageMemory {
    stored: Vec<Vec<f64>>,
    running_sum: Vec<f64>,
    updates: u64,
    arithmetic_ops: u64,
}

impl AverageMemory {
    /// Initializes every stored vector with the subset back projection of the
    /// attenuated-count estimate at `x` (one full data pass of work).
    pub fn init(
        matrix: &SparseSystemMatrix,
        i0: &[f64],
        partition: &SubsetPartition,
        x: &[f64],
    ) -> Result<Self, AlgorithmError> {
        let n = matrix.n();
        let mut stored = Vec::with_capacity(partition.n_subsets());
        for k in 0..partition.n_subsets() {
            stored.push(subset_qhat_backprojection(
                matrix,
                i0,
                partition.rays(k),
                x,
            )?);
        }
        let mut running_sum = vec![0.0; n];
        for bk in &stored {
            for j in 0..n {
                running_sum[j] += bk[j];
            }
        }
        Ok(AverageMemory {
            stored,
            running_sum,
            updates: 0,
            arithmetic_ops: 0,
        })
    }

    /// Replaces the stored vector of subset `k`, maintaining the running sum
    /// by subtracting the old entry and adding the new one: exactly `2N`
    /// arithmetic operations.
    pub fn update(&mut self, k: usize, new_bk: &[f64]) {
        let old = &mut self.stored[k];
        assert_eq!(old.len(), new_bk.len());
        for j in 0..new_bk.len() {
            self.running_sum[j] = (self.running_sum[j] - old[j]) + new_bk[j];
        }
        old.copy_from_slice(new_bk);
        self.updates += 1;
        self.arithmetic_ops += 2 * new_bk.len() as u64;
        #[cfg(debug_assertions)]
        self.debug_verify();
    }

    pub fn running_sum(&self) -> &[f64] {
        &self.running_sum
    }

    pub fn stored(&self, k: usize) -> &[f64] {
        &self.stored[k]
    }

    pub fn n_subsets(&self) -> usize {
        self.stored.len()
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Total arithmetic operations spent on running-sum maintenance.
    pub fn arithmetic_ops(&self) -> u64 {
        self.arithmetic_ops
    }

    /// Recomputes the sum from scratch (test/diagnostic path).
    pub fn explicit_sum(&self) -> Vec<f64> {
        let n = self.running_sum.len();
        let mut sum = vec![0.0; n];
        for bk in &self.stored {
            for j in 0..n {
                sum[j] += bk[j];
            }
        }
        sum
    }

    /// Worst per-entry deviation between the running sum and a fresh resum,
    /// relative to `max(|entry|, memory scale)` where the scale is the
    /// largest entry of the resum. An entry that decayed far below the
    /// memory's scale necessarily retains absolute roundoff from its larger
    /// past, so entry-relative error is only meaningful down to that scale.
    pub fn max_relative_sum_error(&self) -> f64 {
        let explicit = self.explicit_sum();
        let scale = explicit
            .iter()
            .fold(0.0f64, |a, &b| a.max(math::abs(b)))
            .max(1e-300);
        let mut worst = 0.0f64;
        for (a, b) in self.running_sum.iter().zip(&explicit) {
            let err = math::abs(a - b) / math::abs(*b).max(scale);
            worst = worst.max(err);
        }
        worst
    }

    #[cfg(debug_assertions)]
    fn debug_verify(&self) {
        debug_assert!(
            self.max_relative_sum_error() <= 1e-9,
            "running sum drifted from the stored vectors"
        );
    }
}

/// Progress report passed to the run callback after every iteration (and once
/// before the first). `objective` is populated only at integer pass
/// boundaries, where it is evaluated for logging.
#[derive(Debug)]
pub struct Progress<'a> {
    pub iteration: u64,
    pub passes: f64,
    pub objective: Option<f64>,
    pub x: &'a [f64],
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunDiagnostics {
    /// Per-pixel solves that hit the iteration cap.
    pub solver_nonconverged: u64,
    /// Per-pixel solves that failed numerically (start point kept).
    pub solver_failures: u64,
    /// Degenerate closed-form updates (zero coefficients).
    pub degenerate_updates: u64,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub x: Vec<f64>,
    pub iterations: u64,
    pub passes: f64,
    pub final_objective: f64,
    pub diagnostics: RunDiagnostics,
    /// The `1/L` step scale used, for gradient-descent schemes.
    pub lipschitz: Option<f64>,
    /// Final per-subset memory of the averaged schemes, for inspection.
    pub memory: Option<AverageMemory>,
}

/// One reconstruction request. `partition` is required for subset schemes and
/// ignored by the full ones; `lipschitz` lets callers share a precomputed
/// bound across gradient-descent runs.
#[derive(Clone, Copy, Debug)]
pub struct RunRequest<'a> {
    pub problem: &'a ReconProblem,
    pub cfg: &'a AlgorithmConfig,
    pub x0: Option<&'a [f64]>,
    pub partition: Option<&'a SubsetPartition>,
    pub lipschitz: Option<f64>,
}

struct VoxelStats {
    nonconverged: u64,
    failures: u64,
    degenerate: u64,
}

/// Minimizes the separable surrogate pixel by pixel around `x_hat`.
///
/// `b_lin` and `b_exp` are the linear and exponential coefficient vectors of
/// the scheme at hand; `lambda_scale == 0` takes the closed-form path.
fn solve_voxels_js(
    x_hat: &[f64],
    b_lin: &[f64],
    b_exp: &[f64],
    z: f64,
    lambda_scale: f64,
    delta: f64,
    neighborhood: &NeighborhoodSystem,
    solver: &SolverParams,
) -> (Vec<f64>, VoxelStats) {
    let n = x_hat.len();
    let results: Vec<(f64, u8)> = map_indexed(n, |j| {
        // coefficients are sums of nonnegative terms; a maintained running
        // sum can carry a negative roundoff residue, which must not reach
        // the solver as negative curvature
        let b_exp_j = b_exp[j].max(0.0);
        if lambda_scale == 0.0 {
            let (x_new, outcome) = closed_form_update(b_lin[j], b_exp_j, z, x_hat[j]);
            (x_new, if outcome.is_degenerate() { 2 } else { 0 })
        } else {
            let objective = VoxelObjective {
                b_lin: b_lin[j],
                b_exp: b_exp_j,
                z,
                x_hat: x_hat[j],
                reg: Some(RegSurrogate1D::new(
                    neighborhood,
                    x_hat,
                    j,
                    delta,
                    lambda_scale,
                )),
            };
            let solve = minimize_1d(&objective, x_hat[j], solver);
            match solve.status {
                SolveStatus::Converged => (solve.x, 0),
                SolveStatus::MaxIters => (solve.x, 1),
                SolveStatus::NumericalFailure => (x_hat[j], 3),
            }
        }
    });
    let mut stats = VoxelStats {
        nonconverged: 0,
        failures: 0,
        degenerate: 0,
    };
    let mut x_new = Vec::with_capacity(n);
    for (x, code) in results {
        match code {
            1 => stats.nonconverged += 1,
            2 => stats.degenerate += 1,
            3 => stats.failures += 1,
            _ => {}
        }
        x_new.push(x);
    }
    (x_new, stats)
}

/// Back projection of `qhat` restricted to `rays`, evaluated at `x`.
fn subset_qhat_backprojection(
    matrix: &SparseSystemMatrix,
    i0: &[f64],
    rays: &[u32],
    x: &[f64],
) -> Result<Vec<f64>, AlgorithmError> {
    let l = matrix.forward_project_rays(rays, x)?;
    let i0_sub: Vec<f64> = rays.iter().map(|&r| i0[r as usize]).collect();
    let q = attenuated_counts(&i0_sub, &l);
    Ok(matrix.back_project_rays(rays, &q)?)
}

/// Back projection of `qhat` over all rays, evaluated at `x`.
fn full_qhat_backprojection(
    matrix: &SparseSystemMatrix,
    i0: &[f64],
    x: &[f64],
) -> Result<Vec<f64>, AlgorithmError> {
    let l = matrix.forward_project(x)?;
    let q = attenuated_counts(i0, &l);
    Ok(matrix.back_project(&q)?)
}

fn passes_value(init_full_passes: u64, iterations: u64, n_subsets: u64) -> f64 {
    if iterations % n_subsets == 0 {
        (init_full_passes + iterations / n_subsets) as f64
    } else {
        init_full_passes as f64 + iterations as f64 / n_subsets as f64
    }
}

/// Runs the configured scheme until `max_passes` effective data passes,
/// invoking `callback` after every iteration. Returns the final iterate and
/// bookkeeping. Published iterates are nonnegative by construction; any
/// non-finite pixel aborts.
pub fn run<F>(req: &RunRequest<'_>, mut callback: F) -> Result<RunOutcome, AlgorithmError>
where
    F: FnMut(&Progress<'_>),
{
    let cfg = req.cfg;
    cfg.validate()?;
    let problem = req.problem;
    let matrix = &problem.matrix;
    let n = matrix.n();
    let scheme = cfg.scheme;

    let z = matrix.max_row_sum()?;
    let solver = cfg.solver.resolve(1.0 / z)?;
    let b_full = matrix.back_project(problem.data.d())?;

    let partition = if scheme.is_full() {
        None
    } else {
        let p = req.partition.ok_or(AlgorithmError::MissingPartition)?;
        if p.n_subsets() != cfg.n_subsets {
            return Err(AlgorithmError::PartitionMismatch {
                expected: cfg.n_subsets,
                got: p.n_subsets(),
            });
        }
        Some(p)
    };
    let b = cfg.n_subsets as u64;

    let lipschitz = if scheme.is_gradient_descent() {
        Some(match req.lipschitz {
            Some(l) => l,
            None => problem.lipschitz_constant(&cfg.reg, 1e-6, 1000)?,
        })
    } else {
        None
    };

    let mut x: Vec<f64> = match req.x0 {
        Some(x0) => {
            if x0.len() != n {
                return Err(AlgorithmError::Model(ModelError::DimensionMismatch {
                    what: "initial image length",
                    expected: n,
                    got: x0.len(),
                }));
            }
            if x0.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(AlgorithmError::InvalidConfig(
                    "initial image must be finite and nonnegative",
                ));
            }
            x0.to_vec()
        }
        None => vec![DEFAULT_X0; n],
    };

    let mut diagnostics = RunDiagnostics::default();
    let mut rng: Option<ChaCha8Rng> = scheme.is_stochastic().then(|| stream_rng(cfg.seed, 0));

    let phi0 = problem.objective(&x, &cfg.reg)?;
    callback(&Progress {
        iteration: 0,
        passes: 0.0,
        objective: Some(phi0),
        x: &x,
    });

    let mut memory = None;
    let mut init_full_passes = 0u64;
    if scheme.is_averaged() {
        let p = partition.expect("averaged schemes validated above");
        memory = Some(AverageMemory::init(matrix, problem.data.i0(), p, &x)?);
        init_full_passes = 1;
        // the initialization pass is charged before the first update
        callback(&Progress {
            iteration: 0,
            passes: passes_value(init_full_passes, 0, b),
            objective: Some(phi0),
            x: &x,
        });
    }

    let t_max = (cfg.max_passes as u64).saturating_sub(init_full_passes) * b;
    let mut final_objective = phi0;

    for t in 1..=t_max {
        let k = if scheme.is_full() {
            0
        } else if scheme.is_stochastic() {
            uniform_index(rng.as_mut().expect("stochastic rng"), cfg.n_subsets)
        } else {
            ((t - 1) % b) as usize
        };

        match scheme {
            Scheme::FullJs => {
                let b_hat = full_qhat_backprojection(matrix, problem.data.i0(), &x)?;
                let (x_new, stats) = solve_voxels_js(
                    &x,
                    &b_full,
                    &b_hat,
                    z,
                    effective_lambda(scheme, cfg.reg.lambda, cfg.n_subsets),
                    cfg.reg.delta,
                    &problem.neighborhood,
                    &solver,
                );
                absorb(&mut diagnostics, stats);
                x = x_new;
            }
            Scheme::OsJs => {
                let p = partition.expect("validated");
                let rays = p.rays(k);
                let b_hat_k =
                    subset_qhat_backprojection(matrix, problem.data.i0(), rays, &x)?;
                let (x_new, stats) = solve_voxels_js(
                    &x,
                    p.backprojection(k),
                    &b_hat_k,
                    z,
                    effective_lambda(scheme, cfg.reg.lambda, cfg.n_subsets),
                    cfg.reg.delta,
                    &problem.neighborhood,
                    &solver,
                );
                absorb(&mut diagnostics, stats);
                x = x_new;
            }
            Scheme::SaJs | Scheme::OsaJs => {
                let p = partition.expect("validated");
                let mem = memory.as_mut().expect("averaged memory initialized");
                average_js_iteration(
                    matrix,
                    problem,
                    p,
                    mem,
                    &b_full,
                    z,
                    &cfg.reg,
                    &solver,
                    k,
                    &mut x,
                    &mut diagnostics,
                )?;
            }
            Scheme::FullGd => {
                let b_hat = full_qhat_backprojection(matrix, problem.data.i0(), &x)?;
                let l_phi = lipschitz.expect("computed for GD schemes");
                gd_update(
                    &mut x,
                    &b_full,
                    &b_hat,
                    effective_lambda(scheme, cfg.reg.lambda, cfg.n_subsets),
                    cfg.reg.delta,
                    problem,
                    l_phi,
                );
            }
            Scheme::OsGd => {
                let p = partition.expect("validated");
                let rays = p.rays(k);
                let b_hat_k =
                    subset_qhat_backprojection(matrix, problem.data.i0(), rays, &x)?;
                let l_phi = lipschitz.expect("computed for GD schemes");
                gd_update(
                    &mut x,
                    p.backprojection(k),
                    &b_hat_k,
                    effective_lambda(scheme, cfg.reg.lambda, cfg.n_subsets),
                    cfg.reg.delta,
                    problem,
                    l_phi,
                );
            }
            Scheme::SaGd => {
                let p = partition.expect("validated");
                let mem = memory.as_mut().expect("averaged memory initialized");
                let b_hat_k =
                    subset_qhat_backprojection(matrix, problem.data.i0(), p.rays(k), &x)?;
                mem.update(k, &b_hat_k);
                let l_phi = lipschitz.expect("computed for GD schemes");
                gd_update(
                    &mut x,
                    &b_full,
                    mem.running_sum(),
                    effective_lambda(scheme, cfg.reg.lambda, cfg.n_subsets),
                    cfg.reg.delta,
                    problem,
                    l_phi,
                );
            }
        }

        if x.iter().any(|v| !v.is_finite()) {
            return Err(AlgorithmError::NonFinite { iteration: t });
        }

        let passes = passes_value(init_full_passes, t, b);
        let objective = if t % b == 0 {
            let phi = problem.objective(&x, &cfg.reg)?;
            final_objective = phi;
            Some(phi)
        } else {
            None
        };
        callback(&Progress {
            iteration: t,
            passes,
            objective,
            x: &x,
        });
    }

    Ok(RunOutcome {
        x,
        iterations: t_max,
        passes: passes_value(init_full_passes, t_max, b),
        final_objective,
        diagnostics,
        lipschitz,
        memory,
    })
}

/// Shared SA-JS/OSA-JS update: refresh subset `k`'s stored back projection at
/// the current estimate, then solve with the full `b` and the running sum as
/// the exponential coefficient, at full regularizer strength.
#[allow(clippy::too_many_arguments)]
fn average_js_iteration(
    matrix: &SparseSystemMatrix,
    problem: &ReconProblem,
    partition: &SubsetPartition,
    memory: &mut AverageMemory,
    b_full: &[f64],
    z: f64,
    reg: &RegularizerParams,
    solver: &SolverParams,
    k: usize,
    x: &mut Vec<f64>,
    diagnostics: &mut RunDiagnostics,
) -> Result<(), AlgorithmError> {
    let b_hat_k = subset_qhat_backprojection(matrix, problem.data.i0(), partition.rays(k), x)?;
    memory.update(k, &b_hat_k);
    let (x_new, stats) = solve_voxels_js(
        x,
        b_full,
        memory.running_sum(),
        z,
        reg.lambda,
        reg.delta,
        &problem.neighborhood,
        solver,
    );
    absorb(diagnostics, stats);
    *x = x_new;
    Ok(())
}

/// Projected gradient step
/// `x <- [x - (1/L) ((b_lin - b_exp) + lambda_scaled * grad beta(x))]_+`.
fn gd_update(
    x: &mut [f64],
    b_lin: &[f64],
    b_exp: &[f64],
    lambda_scaled: f64,
    delta: f64,
    problem: &ReconProblem,
    l_phi: f64,
) {
    let inv_l = 1.0 / l_phi;
    let mut reg_grad = vec![0.0; x.len()];
    if lambda_scaled > 0.0 {
        problem
            .neighborhood
            .penalty_gradient_into(x, delta, &mut reg_grad);
    }
    for j in 0..x.len() {
        let g = (b_lin[j] - b_exp[j]) + lambda_scaled * reg_grad[j];
        x[j] = (x[j] - inv_l * g).max(0.0);
    }
}

fn absorb(diag: &mut RunDiagnostics, stats: VoxelStats) {
    diag.solver_nonconverged += stats.nonconverged;
    diag.solver_failures += stats.failures;
    diag.degenerate_updates += stats.degenerate;
}
