//! TOML experiment configuration.
//!
//! Every field has a desk-scale default, so `{}` is a valid config; see the
//! README for the documented key reference. Command-line flags override the
//! corresponding fields after parsing.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::str::FromStr;

use jsct_core::algorithms::Scheme;
use jsct_core::model::{NeighborhoodSystem, RegularizerParams};
use jsct_core::projector::Geometry;
use jsct_core::simulate::PhantomKind;
use jsct_core::solver1d::{Method, Solver1DConfig};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub n_rows: usize,
    pub n_cols: usize,
    pub pixel_size: f64,
    pub n_views: usize,
    pub n_dets: usize,
    pub det_spacing: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            n_rows: 64,
            n_cols: 64,
            pixel_size: 1.0,
            n_views: 90,
            n_dets: 96,
            det_spacing: 1.0,
        }
    }
}

impl GeometryConfig {
    pub fn build(&self) -> Result<Geometry> {
        Geometry::new(
            self.n_rows,
            self.n_cols,
            self.pixel_size,
            self.n_views,
            self.n_dets,
            self.det_spacing,
        )
        .map_err(|e| anyhow::anyhow!("{e}"))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomConfig {
    /// One of `shepp_logan_like`, `blocks`, `uniform_disc`.
    pub kind: String,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            kind: "blocks".to_string(),
        }
    }
}

impl PhantomConfig {
    pub fn kind(&self) -> Result<PhantomKind> {
        PhantomKind::from_str(&self.kind)
            .map_err(|_| anyhow::anyhow!("unknown phantom kind '{}'", self.kind))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Incident photons per ray.
    pub i0: f64,
    /// Seed for the per-ray Poisson streams.
    pub seed: u64,
    /// Skip the noise draw and use the mean counts.
    pub noiseless: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            i0: 8e3,
            seed: 1885,
            noiseless: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RegularizerConfig {
    pub lambda: f64,
    pub delta: f64,
    /// `four` or `eight` connected pixel neighborhood.
    pub neighborhood: String,
}

impl Default for RegularizerConfig {
    fn default() -> Self {
        RegularizerConfig {
            // lambda is tied to the geometry/count scale; this default suits
            // the 64x64 desk problem at i0 = 8e3
            lambda: 50.0,
            delta: 1e-3,
            neighborhood: "four".to_string(),
        }
    }
}

impl RegularizerConfig {
    pub fn params(&self) -> Result<RegularizerParams> {
        RegularizerParams::new(self.lambda, self.delta).map_err(|e| anyhow::anyhow!("{e}"))
    }

    pub fn neighborhood(&self, n_rows: usize, n_cols: usize) -> Result<NeighborhoodSystem> {
        match self.neighborhood.as_str() {
            "four" => Ok(NeighborhoodSystem::four_connected(n_rows, n_cols)),
            "eight" => Ok(NeighborhoodSystem::eight_connected(n_rows, n_cols)),
            other => bail!("unknown neighborhood '{other}' (expected 'four' or 'eight')"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// `newton`, `trust_region`, or `fixed_trust_region`.
    pub method: String,
    pub grad_tol: f64,
    pub max_iters: u32,
    /// Defaults to `1/Z` of the built system matrix when omitted.
    pub tr_initial_radius: Option<f64>,
    /// Defaults to `1/Z` when omitted.
    pub tr_fixed_radius: Option<f64>,
    pub tr_eta: f64,
    pub tr_expand: f64,
    pub tr_shrink: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: "trust_region".to_string(),
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

impl SolverConfig {
    pub fn build(&self) -> Result<Solver1DConfig> {
        let method = match self.method.as_str() {
            "newton" => Method::Newton,
            "trust_region" => Method::TrustRegion,
            "fixed_trust_region" => Method::FixedTrustRegion,
            other => bail!("unknown solver method '{other}'"),
        };
        Ok(Solver1DConfig {
            method,
            grad_tol: self.grad_tol,
            max_iters: self.max_iters,
            tr_initial_radius: self.tr_initial_radius,
            tr_fixed_radius: self.tr_fixed_radius,
            tr_eta: self.tr_eta,
            tr_expand: self.tr_expand,
            tr_shrink: self.tr_shrink,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Scheme names; full schemes run once, subset schemes once per entry of
    /// `subset_counts`.
    pub algorithms: Vec<String>,
    pub subset_counts: Vec<usize>,
    pub max_passes: u32,
    /// Effective passes of the long Full-JS run that pins the reference
    /// optimum.
    pub ref_max_passes: u32,
    /// Seed for the stochastic schemes' subset choice.
    pub seed: u64,
    /// Uniform starting image value, mm^-1.
    pub initial_value: f64,
    pub output_dir: String,
    /// Fixed-order reductions are always used; under `reproducible` the CSV
    /// wall-clock column is zeroed so reruns are bitwise identical.
    pub reproducible: bool,
    /// Worker threads for ray/pixel maps; 0 keeps the library default.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            algorithms: Scheme::ALL.iter().map(|s| s.label().to_string()).collect(),
            subset_counts: vec![8, 64],
            max_passes: 20,
            ref_max_passes: 2000,
            seed: 7,
            initial_value: 1e-3,
            output_dir: "jsct-out".to_string(),
            reproducible: true,
            threads: 0,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub geometry: GeometryConfig,
    pub phantom: PhantomConfig,
    pub data: DataConfig,
    pub regularizer: RegularizerConfig,
    pub solver: SolverConfig,
    pub experiment: ExperimentConfig,
}

impl Config {
    pub fn from_path(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Config::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Config> {
        let cfg: Config = toml::from_str(text).context("parsing config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn schemes(&self) -> Result<Vec<Scheme>> {
        self.experiment
            .algorithms
            .iter()
            .map(|name| {
                Scheme::from_str(name).map_err(|_| anyhow::anyhow!("unknown algorithm '{name}'"))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.build()?;
        self.phantom.kind()?;
        self.regularizer.params()?;
        self.solver.build()?;
        if self.experiment.algorithms.is_empty() {
            bail!("experiment.algorithms must list at least one algorithm");
        }
        let schemes = self.schemes()?;
        if self.experiment.subset_counts.is_empty()
            && schemes.iter().any(|s| !s.is_full())
        {
            bail!("experiment.subset_counts must be nonempty for subset schemes");
        }
        for &b in &self.experiment.subset_counts {
            if b == 0 {
                bail!("subset counts must be >= 1");
            }
            if b > self.geometry.n_views {
                bail!(
                    "subset count {b} exceeds the view count {}",
                    self.geometry.n_views
                );
            }
        }
        if !(self.experiment.initial_value >= 0.0) {
            bail!("experiment.initial_value must be >= 0");
        }
        if !(self.data.i0 > 0.0) {
            bail!("data.i0 must be > 0");
        }
        Ok(())
    }
}
