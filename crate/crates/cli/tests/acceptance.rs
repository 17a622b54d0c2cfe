//! Acceptance suite: one test per release criterion, each printing a
//! `ACCEPTANCE <n> PASS` line (visible with `--nocapture`).
//!
//! Criteria 8 and 9 share one desk-scale experiment, run once and reused.

use std::sync::LazyLock;

use jsct_cli::config::Config;
use jsct_cli::harness::run_experiment;
use jsct_cli::io::{read_convergence_csv, ConvergenceRecord};

use jsct_core::algorithms::{run, AlgorithmConfig, RunRequest, Scheme};
use jsct_core::model::{
    NeighborhoodSystem, PoissonData, ReconProblem, RegularizerParams,
};
use jsct_core::projector::{partition_rays, Geometry, SparseSystemMatrix};
use jsct_core::rng::{stream_rng, u01};
use jsct_core::simulate::{make_phantom, simulate_counts, Incident, PhantomKind};
use jsct_core::solver1d::{minimize_1d, Method, Solver1DConfig, VoxelObjective};
use jsct_core::surrogates::{closed_form_update, surrogate_majorization_check};

/// Desk-scale problem built from the library's config defaults.
fn desk_problem(n: usize, n_views: usize, n_dets: usize, i0: f64, seed: u64) -> (Geometry, ReconProblem) {
    let geom = Geometry::new(n, n, 1.0, n_views, n_dets, 1.0).unwrap();
    let matrix = SparseSystemMatrix::build(&geom);
    let phantom = make_phantom(PhantomKind::Blocks, &geom);
    let (data, _) = simulate_counts(
        &matrix,
        phantom.image.data(),
        &Incident::Uniform(i0),
        seed,
        false,
    )
    .unwrap();
    let nbhd = NeighborhoodSystem::four_connected(n, n);
    (geom.clone(), ReconProblem::new(matrix, data, nbhd).unwrap())
}

fn random_sparse_problem(
    seed: u64,
    m: usize,
    n_rows: usize,
    n_cols: usize,
    i0_scale: f64,
) -> ReconProblem {
    let mut rng = stream_rng(seed, 0);
    let n = n_rows * n_cols;
    let mut rows = Vec::new();
    for _ in 0..m {
        let mut row = Vec::new();
        for j in 0..n {
            if u01(&mut rng) < 0.6 {
                row.push((j as u32, 0.2 + u01(&mut rng)));
            }
        }
        rows.push(row);
    }
    let matrix = SparseSystemMatrix::from_rows(m, n, rows).unwrap();
    let i0: Vec<f64> = (0..m).map(|_| i0_scale * (0.5 + u01(&mut rng))).collect();
    let d: Vec<f64> = i0.iter().map(|v| v * u01(&mut rng)).collect();
    let data = PoissonData::new(d, i0).unwrap();
    let nbhd = NeighborhoodSystem::four_connected(n_rows, n_cols);
    ReconProblem::new(matrix, data, nbhd).unwrap()
}

#[test]
fn criterion_01_surrogate_majorization_suite() {
    let (_, problem) = desk_problem(16, 24, 28, 1e4, 101);
    let reg = RegularizerParams::new(20.0, 1e-3).unwrap();
    let n = problem.n_voxels();
    let mut rng = stream_rng(102, 0);
    let mut checked = 0;
    for trial in 0..110 {
        let x_hat: Vec<f64> = (0..n).map(|_| 0.1 * u01(&mut rng)).collect();
        let scale = if trial % 2 == 0 { 0.01 } else { 0.2 };
        let x: Vec<f64> = x_hat
            .iter()
            .map(|&v| (v + scale * (u01(&mut rng) - 0.5)).max(0.0))
            .collect();
        let report = surrogate_majorization_check(&problem, &reg, &x, &x_hat).unwrap();
        assert!(
            report.data_ok(),
            "trial {trial}: data majorization violated (gap {}, tangency {})",
            report.data_gap,
            report.data_tangency_err
        );
        assert!(
            report.reg_ok(),
            "trial {trial}: regularizer majorization violated (gap {}, tangency {})",
            report.reg_gap,
            report.reg_tangency_err
        );
        checked += 1;
    }
    assert!(checked >= 100);
    println!("ACCEPTANCE 1 PASS: majorization + tangency on {checked} random pairs (16x16)");
}

#[test]
fn criterion_02_closed_form_vs_numerical_minimizer() {
    let mut rng = stream_rng(202, 0);
    let params = Solver1DConfig {
        method: Method::Newton,
        grad_tol: 1e-12,
        max_iters: 200,
        ..Solver1DConfig::default()
    }
    .resolve(1.0)
    .unwrap();
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let b = 1e-3 + u01(&mut rng) * 1e3;
        let bh = 1e-3 + u01(&mut rng) * 1e3;
        let z = 0.5 + u01(&mut rng) * 49.5;
        let xh = u01(&mut rng) * 5.0;
        let (want, _) = closed_form_update(b, bh, z, xh);
        let f = VoxelObjective::unregularized(b, bh, z, xh);
        let solve = minimize_1d(&f, xh, &params);
        let err = (solve.x - want).abs();
        worst = worst.max(err);
        assert!(
            err < 1e-8,
            "closed form {want} vs solver {} (b={b}, bh={bh}, z={z}, xh={xh})",
            solve.x
        );
    }
    println!("ACCEPTANCE 2 PASS: closed form matches solver on 10^4 draws (worst |dx| = {worst:.2e})");
}

#[test]
fn criterion_03_gradient_vs_central_differences() {
    let mut rng = stream_rng(303, 0);
    let mut checked = 0;
    for &lambda in &[0.0, 7.5] {
        let problem = random_sparse_problem(304 + lambda as u64, 8, 2, 3, 10.0);
        let reg = RegularizerParams::new(lambda, 0.05).unwrap();
        for _ in 0..10 {
            let x: Vec<f64> = (0..problem.n_voxels())
                .map(|_| 0.1 + u01(&mut rng))
                .collect();
            let g = problem.gradient(&x, &reg).unwrap();
            let gscale = g.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            for j in 0..x.len() {
                let h = 1e-6 * (1.0 + x[j].abs());
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fd = (problem.objective(&xp, &reg).unwrap()
                    - problem.objective(&xm, &reg).unwrap())
                    / (2.0 * h);
                let denom = fd.abs().max(1e-8 * gscale).max(1e-12);
                assert!(
                    (g[j] - fd).abs() / denom < 1e-5,
                    "lambda {lambda}, component {j}: analytic {} vs fd {fd}",
                    g[j]
                );
            }
            checked += 1;
        }
    }
    assert_eq!(checked, 20);
    println!("ACCEPTANCE 3 PASS: gradient matches central differences at 20 random points");
}

#[test]
fn criterion_04_lipschitz_bound() {
    use nalgebra::DMatrix;
    let problem = random_sparse_problem(404, 10, 4, 2, 30.0);
    let reg = RegularizerParams::new(12.0, 0.1).unwrap();
    let n = problem.n_voxels();

    // dense oracle for the bounding operator's top eigenvalue
    let mut dense: DMatrix<f64> = DMatrix::zeros(n, n);
    let max_i0 = problem.data.i0().iter().cloned().fold(0.0, f64::max);
    for i in 0..problem.n_rays() {
        let (cols, vals) = problem.matrix.row(i);
        for (&a, &va) in cols.iter().zip(vals) {
            for (&b, &vb) in cols.iter().zip(vals) {
                dense[(a as usize, b as usize)] += max_i0 * va * vb;
            }
        }
    }
    let lambda_eff = reg.lambda * problem.neighborhood.max_weight();
    for j in 0..n {
        for (j2, _) in problem.neighborhood.neighbors(j) {
            dense[(j, j)] += lambda_eff;
            dense[(j2, j2)] += lambda_eff;
            dense[(j, j2)] -= lambda_eff;
            dense[(j2, j)] -= lambda_eff;
        }
    }
    let want = dense
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::MIN, |a, &b| a.max(b));
    let got = problem.lipschitz_constant(&reg, 1e-10, 100_000).unwrap();
    assert!(
        (got - want).abs() < 1e-6 * want,
        "power iteration {got} vs dense eigensolver {want}"
    );

    // Hessian quadratic form stays below L ||v||^2
    let mut rng = stream_rng(405, 0);
    for _ in 0..100 {
        let x: Vec<f64> = (0..n).map(|_| 0.2 + u01(&mut rng)).collect();
        let v: Vec<f64> = (0..n).map(|_| u01(&mut rng) - 0.5).collect();
        let h = 1e-5;
        let xp: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + h * b).collect();
        let xm: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a - h * b).collect();
        let gp = problem.gradient(&xp, &reg).unwrap();
        let gm = problem.gradient(&xm, &reg).unwrap();
        let quad: f64 = gp
            .iter()
            .zip(&gm)
            .zip(&v)
            .map(|((a, b), c)| (a - b) / (2.0 * h) * c)
            .sum();
        let vnorm: f64 = v.iter().map(|a| a * a).sum();
        assert!(
            quad <= got * vnorm * (1.0 + 1e-6),
            "v^T H v = {quad} exceeds L ||v||^2 = {}",
            got * vnorm
        );
    }
    println!(
        "ACCEPTANCE 4 PASS: L = {got:.6e} matches dense oracle to 1e-6 and bounds 100 quadratic forms"
    );
}

#[test]
fn criterion_05_full_js_monotone_100_passes() {
    let (_, problem) = desk_problem(64, 90, 96, 8e3, 1885);
    let cfg = AlgorithmConfig {
        scheme: Scheme::FullJs,
        n_subsets: 1,
        reg: RegularizerParams::new(50.0, 1e-3).unwrap(),
        solver: Solver1DConfig::default(),
        max_passes: 100,
        seed: 0,
    };
    let mut phis = Vec::new();
    run(
        &RunRequest {
            problem: &problem,
            cfg: &cfg,
            x0: None,
            partition: None,
            lipschitz: None,
        },
        |p| {
            if let Some(phi) = p.objective {
                phis.push(phi);
            }
        },
    )
    .unwrap();
    assert_eq!(phis.len(), 101);
    for (i, w) in phis.windows(2).enumerate() {
        assert!(
            w[1] <= w[0] + 1e-9 * (1.0 + w[0].abs()),
            "objective increased at iteration {}: {} -> {}",
            i + 1,
            w[0],
            w[1]
        );
    }
    println!(
        "ACCEPTANCE 5 PASS: Full-JS objective nonincreasing over 100 passes ({:.6e} -> {:.6e})",
        phis[0],
        phis[phis.len() - 1]
    );
}

#[test]
fn criterion_06_single_subset_collapse_is_bitwise() {
    let (geom, problem) = desk_problem(32, 40, 48, 1e4, 606);
    let partition = partition_rays(&geom, &problem.matrix, problem.data.d(), 1).unwrap();
    let reg = RegularizerParams::new(10.0, 1e-3).unwrap();

    let collect = |scheme: Scheme, passes: u32| -> Vec<Vec<f64>> {
        let cfg = AlgorithmConfig {
            scheme,
            n_subsets: 1,
            reg,
            solver: Solver1DConfig::default(),
            max_passes: passes,
            seed: 42,
        };
        let mut iterates = Vec::new();
        run(
            &RunRequest {
                problem: &problem,
                cfg: &cfg,
                x0: None,
                partition: (!scheme.is_full()).then_some(&partition),
                lipschitz: None,
            },
            |p| {
                if p.iteration > 0 {
                    iterates.push(p.x.to_vec());
                }
            },
        )
        .unwrap();
        iterates
    };

    let reference = collect(Scheme::FullJs, 20);
    assert_eq!(reference.len(), 20);
    for scheme in [Scheme::OsJs, Scheme::SaJs, Scheme::OsaJs] {
        let extra = if scheme.is_averaged() { 1 } else { 0 };
        let got = collect(scheme, 20 + extra);
        assert_eq!(got.len(), 20, "{scheme:?}");
        let mut max_dev = 0.0f64;
        for (a, b) in reference.iter().zip(&got) {
            for (ai, bi) in a.iter().zip(b) {
                max_dev = max_dev.max((ai - bi).abs());
            }
        }
        assert_eq!(max_dev, 0.0, "{scheme:?} deviated from Full-JS");
    }
    println!("ACCEPTANCE 6 PASS: OS/SA/OSA with one subset reproduce Full-JS bitwise for 20 iterations");
}

#[test]
fn criterion_07_stochastic_average_bookkeeping() {
    let (geom, problem) = desk_problem(32, 48, 48, 1e4, 707);
    let b = 16;
    let partition = partition_rays(&geom, &problem.matrix, problem.data.d(), b).unwrap();
    let cfg = AlgorithmConfig {
        scheme: Scheme::SaJs,
        n_subsets: b,
        reg: RegularizerParams::new(10.0, 1e-3).unwrap(),
        solver: Solver1DConfig::default(),
        // memory init charges one pass; 33 passes = 512 update iterations
        max_passes: 33,
        seed: 7,
    };
    let outcome = run(
        &RunRequest {
            problem: &problem,
            cfg: &cfg,
            x0: None,
            partition: Some(&partition),
            lipschitz: None,
        },
        |_| {},
    )
    .unwrap();
    let memory = outcome.memory.expect("averaged scheme keeps memory");
    let n = problem.n_voxels() as u64;
    assert_eq!(outcome.iterations, 512);
    assert!(outcome.iterations >= 500, "need at least 500 update steps");
    assert_eq!(memory.updates(), outcome.iterations);
    assert_eq!(
        memory.arithmetic_ops(),
        2 * n * memory.updates(),
        "running-sum maintenance must cost exactly 2N per update"
    );
    let err = memory.max_relative_sum_error();
    assert!(
        err <= 1e-9,
        "running sum drifted {err:.3e} relative from the stored vectors"
    );
    println!(
        "ACCEPTANCE 7 PASS: after {} SA-JS updates (B=16) running-sum error {err:.2e}, cost 2N per update",
        memory.updates()
    );
}

/// The shared desk-scale trend experiment for criteria 8 and 9: the default
/// config (blocks phantom, 64x64, subset counts 8 and 64) at fixed seeds.
struct TrendExperiment {
    _dir: tempfile::TempDir,
    curves: std::collections::BTreeMap<String, Vec<ConvergenceRecord>>,
}

static TREND: LazyLock<TrendExperiment> = LazyLock::new(|| {
    let dir = tempfile::tempdir().expect("tempdir");
    let mut cfg = Config::default();
    cfg.experiment.output_dir = dir.path().display().to_string();
    let summary = run_experiment(&cfg, None).expect("trend experiment");
    let mut curves = std::collections::BTreeMap::new();
    for path in &summary.csv_paths {
        let records = read_convergence_csv(path).expect("readable CSV");
        let id = records[0].algorithm.clone();
        curves.insert(id, records);
    }
    TrendExperiment { _dir: dir, curves }
});

fn error_at_pass(curves: &TrendExperiment, id: &str, pass: f64) -> f64 {
    curves
        .curves
        .get(id)
        .unwrap_or_else(|| panic!("missing curve {id}"))
        .iter()
        .find(|r| r.pass == pass)
        .unwrap_or_else(|| panic!("{id} has no record at pass {pass}"))
        .normalized_error
}

#[test]
fn criterion_08_trend_reproduction_64_subsets() {
    let t = &*TREND;
    let sa = error_at_pass(t, "sa_js_b64", 20.0);
    let os = error_at_pass(t, "os_js_b64", 20.0);
    let sa_gd = error_at_pass(t, "sa_gd_b64", 20.0);
    let os_gd = error_at_pass(t, "os_gd_b64", 20.0);
    let full_js = error_at_pass(t, "full_js", 20.0);
    let full_gd = error_at_pass(t, "full_gd", 20.0);

    assert!(sa < os, "SA-JS ({sa:.3e}) must beat OS-JS ({os:.3e}) at pass 20");
    assert!(
        sa < sa_gd,
        "SA-JS ({sa:.3e}) must beat SA-GD ({sa_gd:.3e}) at pass 20"
    );
    assert!(
        full_js < full_gd,
        "Full-JS ({full_js:.3e}) must beat Full-GD ({full_gd:.3e})"
    );
    assert!(os < os_gd, "OS-JS ({os:.3e}) must beat OS-GD ({os_gd:.3e})");
    println!(
        "ACCEPTANCE 8 PASS: pass-20 normalized errors (B=64): sa_js {sa:.2e} < os_js {os:.2e}; \
         js beats gd pairwise (full {full_js:.2e}<{full_gd:.2e}, os {os:.2e}<{os_gd:.2e}, sa {sa:.2e}<{sa_gd:.2e})"
    );
}

#[test]
fn criterion_09_ordered_subsets_accelerate_early() {
    let t = &*TREND;
    let os8_at_5 = error_at_pass(t, "os_js_b8", 5.0);
    let full_at_5 = error_at_pass(t, "full_js", 5.0);
    assert!(
        os8_at_5 < full_at_5,
        "OS-JS B=8 at pass 5 ({os8_at_5:.3e}) must beat Full-JS ({full_at_5:.3e})"
    );
    // the incremental advantage persists at pass 20 on this instance
    let os8_at_20 = error_at_pass(t, "os_js_b8", 20.0);
    let full_at_20 = error_at_pass(t, "full_js", 20.0);
    assert!(os8_at_20 < full_at_20);
    println!(
        "ACCEPTANCE 9 PASS: OS-JS B=8 at pass 5 ({os8_at_5:.2e}) below Full-JS ({full_at_5:.2e})"
    );
}

#[test]
fn criterion_10_reruns_are_bitwise_identical() {
    let base = tempfile::tempdir().unwrap();
    let mut cfg = Config::default();
    cfg.geometry.n_rows = 16;
    cfg.geometry.n_cols = 16;
    cfg.geometry.n_views = 24;
    cfg.geometry.n_dets = 28;
    cfg.experiment.subset_counts = vec![4];
    cfg.experiment.max_passes = 3;
    cfg.experiment.ref_max_passes = 30;
    assert!(cfg.experiment.reproducible);

    let mut digests = Vec::new();
    for run_idx in 0..2 {
        let out = base.path().join(format!("run{run_idx}"));
        cfg.experiment.output_dir = out.display().to_string();
        let summary = run_experiment(&cfg, None).unwrap();
        let mut all = Vec::new();
        let mut paths = summary.csv_paths.clone();
        paths.sort();
        for path in paths {
            all.push((
                path.file_name().unwrap().to_string_lossy().to_string(),
                std::fs::read(&path).unwrap(),
            ));
        }
        digests.push(all);
    }
    assert_eq!(digests[0].len(), digests[1].len());
    for (a, b) in digests[0].iter().zip(&digests[1]) {
        assert_eq!(a.0, b.0, "CSV sets differ");
        assert_eq!(a.1, b.1, "CSV {} differs between reruns", a.0);
    }
    println!(
        "ACCEPTANCE 10 PASS: rerun produced bitwise-identical CSVs ({} files)",
        digests[0].len()
    );
}
