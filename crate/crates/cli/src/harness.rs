//! Experiment driver: builds the problem from a config, runs the requested
//! algorithm suite, pins a reference optimum with a long Full-JS run, and
//! writes convergence CSVs, images, and a metadata echo.

use anyhow::{bail, Context, Result};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use jsct_core::algorithms::{run, AlgorithmConfig, RunRequest, Scheme};
use jsct_core::image::ImageVolume;
use jsct_core::model::{ReconProblem, RegularizerParams};
use jsct_core::projector::{partition_rays, Geometry, SparseSystemMatrix, SubsetPartition};
use jsct_core::simulate::{make_phantom, simulate_counts, Incident, Phantom};
use jsct_core::solver1d::Solver1DConfig;

use crate::config::Config;
use crate::io::{
    read_matrix_cache, write_convergence_csv, write_matrix_cache, write_pgm, write_raw_f32,
    ConvergenceRecord,
};

/// Relative per-pass drop below which the reference run's tail counts as
/// flat.
pub const REF_TAIL_TOL: f64 = 1e-8;

/// Slack allowed on normalized errors before the run is declared broken.
pub const NORMALIZED_ERROR_SLACK: f64 = 1e-9;

pub struct Prepared {
    pub geometry: Geometry,
    pub problem: ReconProblem,
    pub phantom: Phantom,
    pub x0: Vec<f64>,
    pub clamped_rays: usize,
    pub detector_covers_image: bool,
}

/// Builds the system matrix, or loads/saves it through the cache file.
pub fn build_or_load_matrix(
    geom: &Geometry,
    cache: Option<&Path>,
) -> Result<SparseSystemMatrix> {
    if let Some(path) = cache {
        if path.exists() {
            let matrix = read_matrix_cache(path)?;
            if matrix.m() != geom.n_rays() || matrix.n() != geom.n_voxels() {
                bail!(
                    "matrix cache {} has shape {}x{}, geometry wants {}x{}",
                    path.display(),
                    matrix.m(),
                    matrix.n(),
                    geom.n_rays(),
                    geom.n_voxels()
                );
            }
            return Ok(matrix);
        }
    }
    let matrix = SparseSystemMatrix::build(geom);
    if let Some(path) = cache {
        write_matrix_cache(path, &matrix)?;
    }
    Ok(matrix)
}

/// Geometry + phantom + simulated data, assembled per the config.
pub fn prepare_problem(cfg: &Config, matrix_cache: Option<&Path>) -> Result<Prepared> {
    let geometry = cfg.geometry.build()?;
    let matrix = build_or_load_matrix(&geometry, matrix_cache)?;
    let phantom = make_phantom(cfg.phantom.kind()?, &geometry);
    let (data, report) = simulate_counts(
        &matrix,
        phantom.image.data(),
        &Incident::Uniform(cfg.data.i0),
        cfg.data.seed,
        cfg.data.noiseless,
    )
    .map_err(|e| anyhow::anyhow!("{e}"))?;
    let neighborhood = cfg
        .regularizer
        .neighborhood(geometry.n_rows, geometry.n_cols)?;
    let problem =
        ReconProblem::new(matrix, data, neighborhood).map_err(|e| anyhow::anyhow!("{e}"))?;
    let x0 = vec![cfg.experiment.initial_value; problem.n_voxels()];
    Ok(Prepared {
        detector_covers_image: geometry.detector_covers_image(),
        geometry,
        problem,
        phantom,
        x0,
        clamped_rays: report.clamped_rays,
    })
}

#[derive(Clone, Debug)]
pub struct ReferenceOptimum {
    pub phi_star: f64,
    pub x_star: Vec<f64>,
    pub passes_run: u32,
    /// Relative objective drop over the final pass.
    pub tail_drop: f64,
    pub tail_flat: bool,
}

/// Long Full-JS run that pins the reference objective value. The best value
/// seen is returned along with a flatness diagnostic on the final pass; a
/// still-dropping tail means `phi_star` is an upper bound and the experiment
/// records a warning.
pub fn compute_reference_optimum(
    problem: &ReconProblem,
    reg: &RegularizerParams,
    solver: &Solver1DConfig,
    x0: &[f64],
    max_ref_passes: u32,
) -> Result<ReferenceOptimum> {
    let cfg = AlgorithmConfig {
        scheme: Scheme::FullJs,
        n_subsets: 1,
        reg: *reg,
        solver: *solver,
        max_passes: max_ref_passes,
        seed: 0,
    };
    let mut phis: Vec<f64> = Vec::new();
    let mut x_star: Vec<f64> = x0.to_vec();
    let mut phi_star = f64::INFINITY;
    let outcome = run(
        &RunRequest {
            problem,
            cfg: &cfg,
            x0: Some(x0),
            partition: None,
            lipschitz: None,
        },
        |p| {
            if let Some(phi) = p.objective {
                phis.push(phi);
                if phi < phi_star {
                    phi_star = phi;
                    x_star = p.x.to_vec();
                }
            }
        },
    )
    .map_err(|e| anyhow::anyhow!("{e}"))?;
    let _ = outcome;
    let tail_drop = match phis.len() {
        0 | 1 => 0.0,
        n => (phis[n - 2] - phis[n - 1]) / (1.0 + phis[n - 1].abs()),
    };
    Ok(ReferenceOptimum {
        phi_star,
        x_star,
        passes_run: max_ref_passes,
        tail_drop,
        tail_flat: tail_drop <= REF_TAIL_TOL,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct VariantMeta {
    pub id: String,
    pub scheme: String,
    pub n_subsets: usize,
    pub iterations: u64,
    pub passes: f64,
    pub final_objective: f64,
    pub wall_seconds_total: f64,
    pub solver_nonconverged: u64,
    pub solver_failures: u64,
    pub degenerate_updates: u64,
    pub lipschitz: Option<f64>,
    pub error: Option<String>,
}

struct VariantRun {
    meta: VariantMeta,
    /// (pass, objective, wall-seconds) at integer pass boundaries.
    records: Vec<(f64, f64, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReferenceMeta {
    pub policy_max_passes: u32,
    pub phi_star: f64,
    pub phi_star_source: String,
    pub tail_drop: f64,
    pub tail_flat: bool,
}

#[derive(Serialize)]
struct Metadata<'a> {
    format: &'static str,
    version: &'static str,
    config: &'a Config,
    derived: DerivedMeta,
    reference: ReferenceMeta,
    runs: Vec<VariantMeta>,
    /// Algorithm variants that the comparison deliberately leaves out.
    comparison_gaps: [&'static str; 1],
    warnings: &'a [String],
}

#[derive(Serialize)]
struct DerivedMeta {
    n_rays: usize,
    n_voxels: usize,
    matrix_nnz: usize,
    jensen_z: f64,
    lipschitz: Option<f64>,
    detector_covers_image: bool,
    clamped_rays: usize,
    pgm_window: [f64; 2],
}

#[derive(Clone, Debug)]
pub struct ExperimentSummary {
    pub output_dir: PathBuf,
    pub phi_star: f64,
    pub phi_star_source: String,
    pub csv_paths: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// The experiment's algorithm variants: full schemes once, subset schemes at
/// every configured subset count.
pub fn variant_list(cfg: &Config) -> Result<Vec<(String, Scheme, usize)>> {
    let mut variants = Vec::new();
    for scheme in cfg.schemes()? {
        if scheme.is_full() {
            variants.push((scheme.label().to_string(), scheme, 1));
        } else {
            for &b in &cfg.experiment.subset_counts {
                variants.push((format!("{}_b{}", scheme.label(), b), scheme, b));
            }
        }
    }
    Ok(variants)
}

/// Runs the configured suite, pins the reference optimum, and writes CSVs,
/// images, and `metadata.json` into the output directory.
pub fn run_experiment(cfg: &Config, matrix_cache: Option<&Path>) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let variants = variant_list(cfg)?;
    let out_dir = PathBuf::from(&cfg.experiment.output_dir);
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating output dir {}", out_dir.display()))?;

    let prepared = prepare_problem(cfg, matrix_cache)?;
    let problem = &prepared.problem;
    let reg = cfg.regularizer.params()?;
    let solver = cfg.solver.build()?;
    let mut warnings: Vec<String> = Vec::new();
    if !prepared.detector_covers_image {
        warnings.push(
            "detector array does not span the image diagonal; some rays miss or truncate the object"
                .to_string(),
        );
    }
    if prepared.clamped_rays > 0 {
        warnings.push(format!(
            "{} rays exceeded the opacity guard and were clamped to zero mean counts",
            prepared.clamped_rays
        ));
    }

    // one Lipschitz bound serves every gradient-descent variant
    let needs_lipschitz = variants.iter().any(|(_, s, _)| s.is_gradient_descent());
    let lipschitz = if needs_lipschitz {
        Some(
            problem
                .lipschitz_constant(&reg, 1e-6, 1000)
                .map_err(|e| anyhow::anyhow!("{e}"))?,
        )
    } else {
        None
    };

    // partitions, one per distinct subset count
    let mut partitions: BTreeMap<usize, SubsetPartition> = BTreeMap::new();
    for &(_, scheme, b) in variants.iter() {
        if !scheme.is_full() && !partitions.contains_key(&b) {
            partitions.insert(
                b,
                partition_rays(&prepared.geometry, &problem.matrix, problem.data.d(), b)
                    .map_err(|e| anyhow::anyhow!("{e}"))?,
            );
        }
    }

    let mut runs: Vec<VariantRun> = Vec::new();
    for (id, scheme, b) in &variants {
        let algo_cfg = AlgorithmConfig {
            scheme: *scheme,
            n_subsets: *b,
            reg,
            solver,
            max_passes: cfg.experiment.max_passes,
            seed: cfg.experiment.seed,
        };
        let mut records: Vec<(f64, f64, f64)> = Vec::new();
        let started = Instant::now();
        let result = run(
            &RunRequest {
                problem,
                cfg: &algo_cfg,
                x0: Some(&prepared.x0),
                partition: partitions.get(b),
                lipschitz,
            },
            |p| {
                if let Some(phi) = p.objective {
                    records.push((p.passes, phi, started.elapsed().as_secs_f64()));
                }
            },
        );
        let wall_total = started.elapsed().as_secs_f64();
        let meta = match result {
            Ok(outcome) => {
                let final_img = ImageVolume::from_vec(
                    prepared.geometry.n_rows,
                    prepared.geometry.n_cols,
                    outcome.x.clone(),
                )
                .map_err(|e| anyhow::anyhow!("{e}"))?;
                write_variant_image(&out_dir, id, &final_img, &prepared)?;
                VariantMeta {
                    id: id.clone(),
                    scheme: scheme.label().to_string(),
                    n_subsets: *b,
                    iterations: outcome.iterations,
                    passes: outcome.passes,
                    final_objective: outcome.final_objective,
                    wall_seconds_total: wall_total,
                    solver_nonconverged: outcome.diagnostics.solver_nonconverged,
                    solver_failures: outcome.diagnostics.solver_failures,
                    degenerate_updates: outcome.diagnostics.degenerate_updates,
                    lipschitz: outcome.lipschitz,
                    error: None,
                }
            }
            Err(e) => {
                warnings.push(format!("{id} aborted: {e}"));
                VariantMeta {
                    id: id.clone(),
                    scheme: scheme.label().to_string(),
                    n_subsets: *b,
                    iterations: 0,
                    passes: 0.0,
                    final_objective: f64::NAN,
                    wall_seconds_total: wall_total,
                    solver_nonconverged: 0,
                    solver_failures: 0,
                    degenerate_updates: 0,
                    lipschitz,
                    error: Some(format!("{e}")),
                }
            }
        };
        runs.push(VariantRun { meta, records });
    }

    // reference optimum: long Full-JS run, then take the minimum over
    // everything observed anywhere in the experiment
    let reference = compute_reference_optimum(
        problem,
        &reg,
        &solver,
        &prepared.x0,
        cfg.experiment.ref_max_passes,
    )?;
    if !reference.tail_flat {
        warnings.push(format!(
            "reference run still dropping {:.3e} relative per pass after {} passes",
            reference.tail_drop, reference.passes_run
        ));
    }
    let mut phi_star = reference.phi_star;
    let mut phi_star_source = "reference_run".to_string();
    for vr in &runs {
        for &(_, phi, _) in &vr.records {
            if phi < phi_star {
                phi_star = phi;
                phi_star_source = format!("algorithm:{}", vr.meta.id);
            }
        }
    }

    // CSVs with normalized errors
    let mut csv_paths = Vec::new();
    for vr in &runs {
        if vr.meta.error.is_some() && vr.records.is_empty() {
            continue;
        }
        let records: Vec<ConvergenceRecord> = vr
            .records
            .iter()
            .map(|&(pass, phi, wall)| ConvergenceRecord {
                algorithm: vr.meta.id.clone(),
                pass,
                objective: phi,
                normalized_error: (phi - phi_star) / phi_star.abs(),
                wall_seconds: if cfg.experiment.reproducible { 0.0 } else { wall },
            })
            .collect();
        validate_records(&vr.meta, &records)?;
        let path = out_dir.join(format!("{}.csv", vr.meta.id));
        write_convergence_csv(&path, &records)?;
        csv_paths.push(path);
    }

    // images: phantom and reference reconstruction
    let window = pgm_window(&prepared.phantom);
    write_raw_f32(
        &out_dir.join("phantom.f32"),
        &prepared.phantom.image,
        prepared.geometry.pixel_size,
    )?;
    write_pgm(
        &out_dir.join("phantom.pgm"),
        &prepared.phantom.image,
        window[0],
        window[1],
    )?;
    let ref_img = ImageVolume::from_vec(
        prepared.geometry.n_rows,
        prepared.geometry.n_cols,
        reference.x_star.clone(),
    )
    .map_err(|e| anyhow::anyhow!("{e}"))?;
    write_raw_f32(
        &out_dir.join("reference_recon.f32"),
        &ref_img,
        prepared.geometry.pixel_size,
    )?;
    write_pgm(
        &out_dir.join("reference_recon.pgm"),
        &ref_img,
        window[0],
        window[1],
    )?;

    let metadata = Metadata {
        format: "jsct-experiment-metadata",
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        derived: DerivedMeta {
            n_rays: problem.n_rays(),
            n_voxels: problem.n_voxels(),
            matrix_nnz: problem.matrix.nnz(),
            jensen_z: problem.matrix.max_row_sum().map_err(|e| anyhow::anyhow!("{e}"))?,
            lipschitz,
            detector_covers_image: prepared.detector_covers_image,
            clamped_rays: prepared.clamped_rays,
            pgm_window: window,
        },
        reference: ReferenceMeta {
            policy_max_passes: cfg.experiment.ref_max_passes,
            phi_star,
            phi_star_source: phi_star_source.clone(),
            tail_drop: reference.tail_drop,
            tail_flat: reference.tail_flat,
        },
        runs: runs.iter().map(|vr| vr.meta.clone()).collect(),
        comparison_gaps: [
            "fast_js (momentum + varying step size variant) is not implemented; its curve is absent",
        ],
        warnings: &warnings,
    };
    let meta_path = out_dir.join("metadata.json");
    std::fs::write(&meta_path, serde_json::to_string_pretty(&metadata)?)
        .with_context(|| format!("writing {}", meta_path.display()))?;

    Ok(ExperimentSummary {
        output_dir: out_dir,
        phi_star,
        phi_star_source,
        csv_paths,
        warnings,
    })
}

fn write_variant_image(
    out_dir: &Path,
    id: &str,
    img: &ImageVolume,
    prepared: &Prepared,
) -> Result<()> {
    let window = pgm_window(&prepared.phantom);
    write_raw_f32(
        &out_dir.join(format!("{id}_recon.f32")),
        img,
        prepared.geometry.pixel_size,
    )?;
    write_pgm(
        &out_dir.join(format!("{id}_recon.pgm")),
        img,
        window[0],
        window[1],
    )?;
    Ok(())
}

/// Shared display window: zero to a hair above the phantom's peak value.
fn pgm_window(phantom: &Phantom) -> [f64; 2] {
    let (_, hi) = phantom.image.min_max();
    let hi = if hi > 0.0 { hi * 1.05 } else { 1.0 };
    [0.0, hi]
}

/// Post-hoc invariants on a variant's records: strictly increasing passes,
/// nonnegative normalized errors, and monotone objectives for Full-JS.
fn validate_records(meta: &VariantMeta, records: &[ConvergenceRecord]) -> Result<()> {
    for pair in records.windows(2) {
        if !(pair[1].pass > pair[0].pass) {
            bail!(
                "{}: pass column not strictly increasing ({} then {})",
                meta.id,
                pair[0].pass,
                pair[1].pass
            );
        }
    }
    for r in records {
        if r.normalized_error < -NORMALIZED_ERROR_SLACK {
            bail!(
                "{}: normalized error {} at pass {} is negative beyond slack; reference optimum is bad",
                meta.id,
                r.normalized_error,
                r.pass
            );
        }
    }
    if meta.scheme == Scheme::FullJs.label() {
        for pair in records.windows(2) {
            if pair[1].objective > pair[0].objective + 1e-9 * (1.0 + pair[0].objective.abs()) {
                bail!(
                    "{}: objective increased from {} to {} (majorize-minimize guarantee broken)",
                    meta.id,
                    pair[0].objective,
                    pair[1].objective
                );
            }
        }
    }
    Ok(())
}

/// Single-algorithm reconstruction from an existing sinogram file.
pub fn reconstruct_from_sinogram(
    cfg: &Config,
    sinogram: &Path,
    out_base: &Path,
    algorithm: Option<&str>,
    subsets: Option<usize>,
    matrix_cache: Option<&Path>,
) -> Result<(PathBuf, f64)> {
    let geometry = cfg.geometry.build()?;
    let (n_views, n_dets, data) = crate::io::read_sinogram(sinogram)?;
    if n_views != geometry.n_views || n_dets != geometry.n_dets {
        bail!(
            "sinogram is {}x{} (views x dets) but the config geometry is {}x{}",
            n_views,
            n_dets,
            geometry.n_views,
            geometry.n_dets
        );
    }
    let matrix = build_or_load_matrix(&geometry, matrix_cache)?;
    let neighborhood = cfg
        .regularizer
        .neighborhood(geometry.n_rows, geometry.n_cols)?;
    let problem =
        ReconProblem::new(matrix, data, neighborhood).map_err(|e| anyhow::anyhow!("{e}"))?;

    let scheme = match algorithm {
        Some(name) => name
            .parse::<Scheme>()
            .map_err(|_| anyhow::anyhow!("unknown algorithm '{name}'"))?,
        None => *cfg
            .schemes()?
            .first()
            .expect("validated: nonempty algorithm list"),
    };
    let b = if scheme.is_full() {
        1
    } else {
        subsets
            .or_else(|| cfg.experiment.subset_counts.first().copied())
            .unwrap_or(1)
    };
    let partition = if scheme.is_full() {
        None
    } else {
        Some(
            partition_rays(&geometry, &problem.matrix, problem.data.d(), b)
                .map_err(|e| anyhow::anyhow!("{e}"))?,
        )
    };
    let algo_cfg = AlgorithmConfig {
        scheme,
        n_subsets: b,
        reg: cfg.regularizer.params()?,
        solver: cfg.solver.build()?,
        max_passes: cfg.experiment.max_passes,
        seed: cfg.experiment.seed,
    };
    let x0 = vec![cfg.experiment.initial_value; problem.n_voxels()];
    let outcome = run(
        &RunRequest {
            problem: &problem,
            cfg: &algo_cfg,
            x0: Some(&x0),
            partition: partition.as_ref(),
            lipschitz: None,
        },
        |_| {},
    )
    .map_err(|e| anyhow::anyhow!("{e}"))?;

    let img = ImageVolume::from_vec(geometry.n_rows, geometry.n_cols, outcome.x)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let raw = out_base.with_extension("f32");
    write_raw_f32(&raw, &img, geometry.pixel_size)?;
    let (_, hi) = img.min_max();
    let hi = if hi > 0.0 { hi } else { 1.0 };
    write_pgm(&out_base.with_extension("pgm"), &img, 0.0, hi)?;
    Ok((raw, outcome.final_objective))
}

/// Installs a global rayon pool of `n` threads (no-op for `n == 0` or if a
/// pool already exists).
pub fn init_threads(n: usize) {
    if n > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}
