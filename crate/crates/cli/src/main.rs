//! `jsct`: regularized Poisson CT reconstruction experiments.
//!
//! Subcommands:
//!   run          run a full algorithm-comparison experiment from a config
//!   phantom      rasterize a phantom to raw f32 + PGM
//!   simulate     synthesize a sinogram from a config
//!   reconstruct  reconstruct an image from an existing sinogram
//!
//! On failure, one machine-readable JSON line (`{"error": "..."}`) goes to
//! stderr and the exit code is nonzero.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use jsct_cli::config::Config;
use jsct_cli::harness::{init_threads, prepare_problem, reconstruct_from_sinogram, run_experiment};
use jsct_cli::io::{write_pgm, write_raw_f32, write_sinogram};
use jsct_core::simulate::{make_phantom, PhantomKind};

#[derive(Parser)]
#[command(
    name = "jsct",
    version,
    about = "Jensen-surrogate and gradient-descent CT reconstruction experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment suite and write CSVs/images/metadata.
    Run {
        /// TOML experiment config.
        config: PathBuf,
        /// Override [data].seed and [experiment].seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override [experiment].output_dir.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Override [experiment].threads (0 = library default).
        #[arg(long)]
        threads: Option<usize>,
        /// Override [experiment].reproducible.
        #[arg(long)]
        reproducible: Option<bool>,
        /// Load/store the system matrix at this path.
        #[arg(long)]
        matrix_cache: Option<PathBuf>,
    },
    /// Rasterize a phantom (`shepp_logan_like`, `blocks`, `uniform_disc`).
    Phantom {
        kind: String,
        /// Output base path; writes `<out>.f32`, `<out>.f32.txt`, `<out>.pgm`.
        out: PathBuf,
        /// Config supplying the geometry (desk-scale defaults otherwise).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Simulate a sinogram from the config's phantom and write it to a file.
    Simulate {
        config: PathBuf,
        /// Output sinogram path.
        out: PathBuf,
        /// Override [data].seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        matrix_cache: Option<PathBuf>,
    },
    /// Reconstruct from an existing sinogram file.
    Reconstruct {
        config: PathBuf,
        sinogram: PathBuf,
        /// Output base path; writes `<out>.f32`, `<out>.f32.txt`, `<out>.pgm`.
        out: PathBuf,
        /// Scheme to run (defaults to the first configured algorithm).
        #[arg(long)]
        algorithm: Option<String>,
        /// Subset count for subset schemes (defaults to the first configured).
        #[arg(long)]
        subsets: Option<usize>,
        /// Override [experiment].seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        matrix_cache: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            e.exit()
        }
        Err(e) => {
            emit_error(&e.to_string());
            return ExitCode::from(2);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            emit_error(&format!("{e:#}"));
            ExitCode::FAILURE
        }
    }
}

fn emit_error(message: &str) {
    let line = serde_json::json!({ "error": message });
    eprintln!("{line}");
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            seed,
            output_dir,
            threads,
            reproducible,
            matrix_cache,
        } => {
            let mut cfg = Config::from_path(&config)?;
            if let Some(s) = seed {
                cfg.data.seed = s;
                cfg.experiment.seed = s;
            }
            if let Some(dir) = output_dir {
                cfg.experiment.output_dir = dir.display().to_string();
            }
            if let Some(t) = threads {
                cfg.experiment.threads = t;
            }
            if let Some(r) = reproducible {
                cfg.experiment.reproducible = r;
            }
            init_threads(cfg.experiment.threads);
            let summary = run_experiment(&cfg, matrix_cache.as_deref())?;
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "experiment complete: {} curves in {}, reference objective {:.10e} ({})",
                summary.csv_paths.len(),
                summary.output_dir.display(),
                summary.phi_star,
                summary.phi_star_source
            );
            Ok(())
        }
        Command::Phantom { kind, out, config } => {
            let cfg = match config {
                Some(path) => Config::from_path(&path)?,
                None => Config::default(),
            };
            let kind: PhantomKind = kind
                .parse()
                .map_err(|_| anyhow::anyhow!("unknown phantom kind '{kind}'"))?;
            let geom = cfg.geometry.build()?;
            let phantom = make_phantom(kind, &geom);
            let raw = out.with_extension("f32");
            write_raw_f32(&raw, &phantom.image, geom.pixel_size)?;
            let (_, hi) = phantom.image.min_max();
            let hi = if hi > 0.0 { hi } else { 1.0 };
            write_pgm(&out.with_extension("pgm"), &phantom.image, 0.0, hi)?;
            println!("phantom '{}' written to {}", kind.label(), raw.display());
            Ok(())
        }
        Command::Simulate {
            config,
            out,
            seed,
            threads,
            matrix_cache,
        } => {
            let mut cfg = Config::from_path(&config)?;
            if let Some(s) = seed {
                cfg.data.seed = s;
            }
            if let Some(t) = threads {
                cfg.experiment.threads = t;
            }
            init_threads(cfg.experiment.threads);
            let prepared = prepare_problem(&cfg, matrix_cache.as_deref())?;
            write_sinogram(&out, &prepared.geometry, &prepared.problem.data)?;
            if !prepared.detector_covers_image {
                eprintln!("warning: detector array does not span the image diagonal");
            }
            println!(
                "sinogram with {} rays written to {}",
                prepared.geometry.n_rays(),
                out.display()
            );
            Ok(())
        }
        Command::Reconstruct {
            config,
            sinogram,
            out,
            algorithm,
            subsets,
            seed,
            threads,
            matrix_cache,
        } => {
            let mut cfg = Config::from_path(&config)?;
            if let Some(s) = seed {
                cfg.experiment.seed = s;
            }
            if let Some(t) = threads {
                cfg.experiment.threads = t;
            }
            init_threads(cfg.experiment.threads);
            let (raw, phi) = reconstruct_from_sinogram(
                &cfg,
                &sinogram,
                &out,
                algorithm.as_deref(),
                subsets,
                matrix_cache.as_deref(),
            )?;
            println!(
                "reconstruction written to {} (final objective {:.10e})",
                raw.display(),
                phi
            );
            Ok(())
        }
    }
}
