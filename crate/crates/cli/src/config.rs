//! Run configuration, read from TOML.

use std::path::PathBuf;

use lagsurv::{Error, SimConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::ingest::MAX_CELLS;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub exposures: Option<PathBuf>,
    pub outcomes: Option<PathBuf>,
    /// Optional `x,l,value` truth grid for GMSE.
    pub truth: Option<PathBuf>,
    #[serde(default)]
    pub normalize: bool,
}

fn d_replicates() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSection {
    #[serde(default = "d_replicates")]
    pub replicates: usize,
    /// Smoothness strength of every replicate fit; the first entry of
    /// `train.lambdas` when absent.
    pub lambda: Option<f64>,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        Self {
            replicates: d_replicates(),
            lambda: None,
        }
    }
}

fn d_gc_n() -> usize {
    8
}
fn d_gc_horizon() -> usize {
    10
}
fn d_gc_step() -> f64 {
    1e-5
}
fn d_gc_tol() -> f64 {
    1e-4
}
fn d_gc_strength() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradCheckSection {
    #[serde(default = "d_gc_n")]
    pub n: usize,
    #[serde(default = "d_gc_horizon")]
    pub horizon: usize,
    #[serde(default = "d_gc_step")]
    pub step: f64,
    #[serde(default = "d_gc_tol")]
    pub tolerance: f64,
    #[serde(default = "d_gc_strength")]
    pub strength: f64,
}

impl Default for GradCheckSection {
    fn default() -> Self {
        Self {
            n: d_gc_n(),
            horizon: d_gc_horizon(),
            step: d_gc_step(),
            tolerance: d_gc_tol(),
            strength: d_gc_strength(),
        }
    }
}

fn d_out() -> PathBuf {
    PathBuf::from("out")
}

/// Everything a command reads. The top-level `seed` drives training,
/// splitting, simulation and resampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_out")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub simulate: SimConfig,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub bootstrap: BootstrapSection,
    #[serde(default)]
    pub gradcheck: GradCheckSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: d_out(),
            train: TrainConfig::default(),
            simulate: SimConfig::default(),
            data: DataSection::default(),
            bootstrap: BootstrapSection::default(),
            gradcheck: GradCheckSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> lagsurv::Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() as u64 + 1)
                .unwrap_or(0);
            Error::Config(format!("line {line}: {}", e.message()))
        })?;
        if cfg.train.seed != 0 && cfg.train.seed != cfg.seed {
            return Err(Error::Config("set the seed at the top level, not under [train]".into()));
        }
        cfg.train.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> lagsurv::Result<()> {
        self.train.validate()?;
        if self.bootstrap.replicates < 2 {
            return Err(Error::Config(format!(
                "bootstrap.replicates must be >= 2, got {}",
                self.bootstrap.replicates
            )));
        }
        let gc = &self.gradcheck;
        if gc.n == 0 || gc.horizon == 0 || gc.tolerance.is_nan() || gc.tolerance <= 0.0 {
            return Err(Error::Config("gradcheck needs positive n, horizon and tolerance".into()));
        }
        let (n, t) = (self.simulate.n, self.simulate.horizon);
        if n == 0 || t == 0 {
            return Err(Error::Config("simulate.n and simulate.horizon must be positive".into()));
        }
        let too_big = |a: usize, b: usize| a.checked_mul(b).is_none_or(|c| c > MAX_CELLS);
        if too_big(n, t) || too_big(gc.n, gc.horizon) {
            return Err(Error::Config(format!("simulated panels are limited to {MAX_CELLS} cells")));
        }
        Ok(())
    }

    /// Smoothness strength for single-fit commands.
    pub fn lambda(&self) -> f64 {
        self.train.lambdas.first().copied().unwrap_or(0.0)
    }
}
