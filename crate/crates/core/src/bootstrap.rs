//! Subject-level bootstrap bands for the fitted exposure and lag functions.

use log::warn;
use rand::Rng as _;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::kernel_at;
use crate::loss::SurvivalOutcome;
use crate::model::{exposure_forward, EvalMode, ExposurePanel};
use crate::params::ParamSet;
use crate::rng::{self, derive_seed, Stream};
use crate::train::{fit, TrainConfig};

/// Largest tolerated fraction of failed replicates.
pub const MAX_FAILURE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Band {
    pub grid: f64,
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CiBands {
    pub f: Vec<Band>,
    pub w: Vec<Band>,
    pub replicates: usize,
    pub failed: Vec<usize>,
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// `f` on the exposure grid and `w` on the lag grid.
type Functions = (Vec<f64>, Vec<f64>);

fn functions(params: &ParamSet, x_grid: &[f64], l_grid: &[usize]) -> Result<Functions> {
    Ok((
        exposure_forward(params, x_grid, EvalMode::Inference)?,
        kernel_at(params, l_grid),
    ))
}

/// Seeds used by replicate `b` of a run with base seed `seed`.
pub fn replicate_seed(seed: u64, b: usize) -> u64 {
    derive_seed(seed, Stream::Replicate, b as u64)
}

pub struct BootstrapInput<'a> {
    pub config: &'a TrainConfig,
    pub panel: &'a ExposurePanel,
    pub outcomes: &'a [SurvivalOutcome],
    pub strength: f64,
    pub x_grid: &'a [f64],
    pub l_grid: &'a [usize],
}

fn replicate(input: &BootstrapInput<'_>, seed: u64) -> Result<Functions> {
    let n = input.outcomes.len();
    let mut r = rng::seeded(seed);
    let idx: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
    let panel = input.panel.select(&idx);
    let outcomes: Vec<SurvivalOutcome> = idx.iter().map(|&i| input.outcomes[i]).collect();
    let cfg = TrainConfig {
        seed,
        ..input.config.clone()
    };
    let fitted = fit(&cfg, &panel, &outcomes, input.strength)?;
    functions(&fitted.params, input.x_grid, input.l_grid)
}

/// Percentile bands from `B` resample-and-refit replicates, one per seed.
/// Replicates are spread over the available cores; results do not depend
/// on the split.
pub fn bootstrap_bands_with_seeds(input: &BootstrapInput<'_>, point: &ParamSet, seeds: &[u64]) -> Result<CiBands> {
    if seeds.len() < 2 {
        return Err(Error::Config(format!("bootstrap needs B >= 2, got {}", seeds.len())));
    }
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(seeds.len());
    let mut results: Vec<Option<Result<Functions>>> = (0..seeds.len()).map(|_| None).collect();
    if workers <= 1 {
        for (slot, &s) in results.iter_mut().zip(seeds) {
            *slot = Some(replicate(input, s));
        }
    } else {
        let chunk = seeds.len().div_ceil(workers);
        std::thread::scope(|scope| {
            for (slots, seeds) in results.chunks_mut(chunk).zip(seeds.chunks(chunk)) {
                scope.spawn(move || {
                    for (slot, &s) in slots.iter_mut().zip(seeds) {
                        *slot = Some(replicate(input, s));
                    }
                });
            }
        });
    }

    let mut f_reps = Vec::new();
    let mut w_reps = Vec::new();
    let mut failed = Vec::new();
    for (b, res) in results.into_iter().enumerate() {
        match res.expect("replicate ran") {
            Ok((f, w)) if f.iter().chain(&w).all(|v| v.is_finite()) => {
                f_reps.push(f);
                w_reps.push(w);
            }
            Ok(_) => failed.push(b),
            Err(e @ (Error::Numeric(_) | Error::NoEvents | Error::DegenerateKernel)) => {
                warn!("bootstrap replicate {b} failed: {e}");
                failed.push(b);
            }
            Err(e) => return Err(e),
        }
    }
    if failed.len() as f64 > MAX_FAILURE_FRACTION * seeds.len() as f64 {
        return Err(Error::Numeric(format!(
            "{} of {} bootstrap replicates failed",
            failed.len(),
            seeds.len()
        )));
    }
    let (pf, pw) = functions(point, input.x_grid, input.l_grid)?;
    let bands = |grid: Vec<f64>, point: &[f64], reps: &[Vec<f64>]| -> Vec<Band> {
        grid.into_iter()
            .enumerate()
            .map(|(k, g)| {
                let mut col: Vec<f64> = reps.iter().map(|r| r[k]).collect();
                col.sort_by(f64::total_cmp);
                Band {
                    grid: g,
                    point: point[k],
                    lo: percentile(&col, 0.025),
                    hi: percentile(&col, 0.975),
                }
            })
            .collect()
    };
    Ok(CiBands {
        f: bands(input.x_grid.to_vec(), &pf, &f_reps),
        w: bands(input.l_grid.iter().map(|&l| l as f64).collect(), &pw, &w_reps),
        replicates: f_reps.len(),
        failed,
    })
}

/// `B` replicates with seeds derived from the configuration seed; the
/// point estimate is fitted on the full data.
pub fn bootstrap_bands(input: &BootstrapInput<'_>, replicates: usize) -> Result<(ParamSet, CiBands)> {
    if replicates < 2 {
        return Err(Error::Config(format!("bootstrap needs B >= 2, got {replicates}")));
    }
    let point = fit(input.config, input.panel, input.outcomes, input.strength)?.params;
    let seeds: Vec<u64> = (0..replicates).map(|b| replicate_seed(input.config.seed, b)).collect();
    let bands = bootstrap_bands_with_seeds(input, &point, &seeds)?;
    Ok((point, bands))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 1.0), 5.0);
        assert_eq!(percentile(&v, 0.5), 3.0);
        assert!((percentile(&v, 0.025) - 1.1).abs() < 1e-12);
        assert_eq!(percentile(&[2.5], 0.9), 2.5);
    }

    fn setup() -> (TrainConfig, crate::sim::SimulatedDataset) {
        use crate::params::NetConfig;
        use crate::sim::{simulate_dataset, ScenarioId, SimConfig};
        let ds = simulate_dataset(&SimConfig::new(ScenarioId::S1, 100, 10), 2).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            max_epochs: 4,
            net: NetConfig::new(vec![3], 2),
            seed: 4,
            ..Default::default()
        };
        (cfg, ds)
    }

    #[test]
    fn identical_seeds_give_zero_width() {
        let (cfg, ds) = setup();
        let x = [0.0, 0.5, 1.0];
        let l = [0, 1, 2];
        let input = BootstrapInput {
            config: &cfg,
            panel: &ds.panel,
            outcomes: &ds.outcomes,
            strength: 0.0,
            x_grid: &x,
            l_grid: &l,
        };
        let point = fit(&cfg, &ds.panel, &ds.outcomes, 0.0).unwrap().params;
        let bands = bootstrap_bands_with_seeds(&input, &point, &[11, 11]).unwrap();
        assert_eq!(bands.replicates, 2);
        for b in bands.f.iter().chain(&bands.w) {
            assert_eq!(b.lo, b.hi);
        }
        assert_eq!((bands.f[0].lo, bands.f[0].hi), (0.0, 0.0));
    }

    #[test]
    fn needs_two_replicates() {
        let (cfg, ds) = setup();
        let input = BootstrapInput {
            config: &cfg,
            panel: &ds.panel,
            outcomes: &ds.outcomes,
            strength: 0.0,
            x_grid: &[0.0],
            l_grid: &[0],
        };
        assert!(matches!(bootstrap_bands(&input, 1), Err(Error::Config(_))));
        let (_, bands) = bootstrap_bands(&input, 3).unwrap();
        assert!(bands.f[0].contains(0.0));
        assert_eq!(bands.w.len(), 1);
    }
}
