//! All seven schemes share one optimum: run each long enough on a small
//! well-posed instance and compare best objective values.

use jsct_core::algorithms::{run, AlgorithmConfig, RunRequest, Scheme};
use jsct_core::model::{NeighborhoodSystem, PoissonData, ReconProblem, RegularizerParams};
use jsct_core::projector::{SparseSystemMatrix, SubsetPartition};
use jsct_core::rng::{stream_rng, u01};
use jsct_core::solver1d::Solver1DConfig;

/// Well-conditioned synthetic system: two identity-like blocks (which bound
/// the spectrum away from zero) plus random coupling rows, consistent
/// noiseless data. With no regularizer every scheme's fixed point is the
/// ground truth, so objectives must agree tightly.
fn well_posed_instance() -> (ReconProblem, Vec<f64>, SubsetPartition) {
    let n = 24;
    let mut rng = stream_rng(2024, 0);
    let mut rows: Vec<Vec<(u32, f64)>> = Vec::new();
    for j in 0..n {
        rows.push(vec![(j as u32, 1.5)]);
    }
    for j in 0..n {
        rows.push(vec![((n - 1 - j) as u32, 1.2)]);
    }
    for _ in 0..(2 * n) {
        let mut row = Vec::new();
        for j in 0..n {
            if u01(&mut rng) < 0.25 {
                row.push((j as u32, 0.2 + 0.6 * u01(&mut rng)));
            }
        }
        if row.is_empty() {
            row.push((0, 0.5));
        }
        rows.push(row);
    }
    let m = rows.len();
    let matrix = SparseSystemMatrix::from_rows(m, n, rows).unwrap();

    let x_true: Vec<f64> = (0..n).map(|_| 0.01 + 0.03 * u01(&mut rng)).collect();
    let l = matrix.forward_project(&x_true).unwrap();
    let i0 = vec![500.0; m];
    let d: Vec<f64> = l.iter().zip(&i0).map(|(&li, &i)| i * (-li).exp()).collect();
    let data = PoissonData::new(d, i0).unwrap();

    let nbhd = NeighborhoodSystem::four_connected(4, 6);
    let problem = ReconProblem::new(matrix, data, nbhd).unwrap();

    // interleaved partition over raw ray indices
    let b = 4;
    let mut subsets = vec![Vec::new(); b];
    for i in 0..m {
        subsets[i % b].push(i as u32);
    }
    let partition = SubsetPartition::from_ray_sets(subsets, &problem.matrix, problem.data.d())
        .unwrap();
    (problem, x_true, partition)
}

#[test]
fn all_seven_schemes_reach_the_shared_optimum() {
    let (problem, _x_true, partition) = well_posed_instance();
    let reg = RegularizerParams::new(0.0, 1e-3).unwrap();
    let lipschitz = problem.lipschitz_constant(&reg, 1e-10, 100_000).unwrap();

    let mut best: Vec<(Scheme, f64)> = Vec::new();
    for scheme in Scheme::ALL {
        let n_subsets = if scheme.is_full() { 1 } else { 4 };
        let passes = if scheme.is_gradient_descent() {
            6000
        } else {
            2000
        };
        let cfg = AlgorithmConfig {
            scheme,
            n_subsets,
            reg,
            solver: Solver1DConfig::default(),
            max_passes: passes,
            seed: 11,
        };
        let outcome = run(
            &RunRequest {
                problem: &problem,
                cfg: &cfg,
                x0: None,
                partition: (!scheme.is_full()).then_some(&partition),
                lipschitz: Some(lipschitz),
            },
            |_| {},
        )
        .unwrap();
        best.push((scheme, outcome.final_objective));
    }

    let phi_best = best.iter().map(|&(_, p)| p).fold(f64::INFINITY, f64::min);
    for (scheme, phi) in best {
        let rel = (phi - phi_best) / phi_best.abs();
        assert!(
            rel <= 1e-6,
            "{scheme:?} stalled at relative gap {rel:.3e} (phi {phi} vs best {phi_best})"
        );
    }
}
