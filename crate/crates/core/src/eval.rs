//! Evaluation metrics: exposure-lag contribution grids, GMSE, time-dependent
//! concordance and test-set loss.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::loss::{build_masks, efron_loss, SurvivalOutcome};
use crate::model::{cumulative_effect, exposure_forward, EvalMode, ExposurePanel, HazardField};
use crate::params::ParamSet;
use crate::sim::Scenario;

/// `n` evenly spaced points covering `[0, 1]`.
pub fn unit_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

/// The 101-point exposure grid.
pub fn default_x_grid() -> Vec<f64> {
    unit_grid(101)
}

pub fn lag_grid(lag: usize) -> Vec<usize> {
    (0..=lag).collect()
}

/// `values[ix * l_grid.len() + il] = f(x_grid[ix]) * w(l_grid[il])`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContributionGrid {
    pub x_grid: Vec<f64>,
    pub l_grid: Vec<usize>,
    pub values: Vec<f64>,
}

impl ContributionGrid {
    pub fn from_functions(x_grid: &[f64], l_grid: &[usize], f: &[f64], w: &[f64]) -> Self {
        let mut values = Vec::with_capacity(x_grid.len() * l_grid.len());
        for &fx in f {
            values.extend(w.iter().map(|&wl| fx * wl));
        }
        Self {
            x_grid: x_grid.to_vec(),
            l_grid: l_grid.to_vec(),
            values,
        }
    }

    pub fn get(&self, ix: usize, il: usize) -> f64 {
        self.values[ix * self.l_grid.len() + il]
    }

    pub fn row(&self, ix: usize) -> &[f64] {
        let nl = self.l_grid.len();
        &self.values[ix * nl..(ix + 1) * nl]
    }

    pub fn column(&self, il: usize) -> Vec<f64> {
        (0..self.x_grid.len()).map(|ix| self.get(ix, il)).collect()
    }
}

fn check_grids(x_grid: &[f64], l_grid: &[usize]) -> Result<()> {
    if x_grid.is_empty() || l_grid.is_empty() {
        return Err(Error::Config("contribution grid axes must be nonempty".into()));
    }
    Ok(())
}

/// Kernel weights at the requested lags, zero beyond the window.
pub fn kernel_at(params: &ParamSet, l_grid: &[usize]) -> Vec<f64> {
    let k = params.kernel();
    l_grid.iter().map(|&l| k.get(l).copied().unwrap_or(0.0)).collect()
}

pub fn model_grid(params: &ParamSet, x_grid: &[f64], l_grid: &[usize]) -> Result<ContributionGrid> {
    check_grids(x_grid, l_grid)?;
    let f = exposure_forward(params, x_grid, EvalMode::Inference)?;
    Ok(ContributionGrid::from_functions(x_grid, l_grid, &f, &kernel_at(params, l_grid)))
}

pub fn scenario_grid(scenario: &Scenario, x_grid: &[f64], l_grid: &[usize]) -> Result<ContributionGrid> {
    check_grids(x_grid, l_grid)?;
    let f: Vec<f64> = x_grid.iter().map(|&x| scenario.exposure_effect(x)).collect();
    let w: Vec<f64> = l_grid.iter().map(|&l| scenario.lag_weight(l)).collect();
    Ok(ContributionGrid::from_functions(x_grid, l_grid, &f, &w))
}

/// Mean squared difference over all grid cells.
pub fn gmse(truth: &ContributionGrid, pred: &ContributionGrid) -> Result<f64> {
    if truth.l_grid != pred.l_grid
        || truth.x_grid.len() != pred.x_grid.len()
        || truth.x_grid.iter().zip(&pred.x_grid).any(|(a, b)| (a - b).abs() > 1e-12)
    {
        return Err(Error::Shape("contribution grids differ".into()));
    }
    let n = truth.values.len() as f64;
    Ok(truth
        .values
        .iter()
        .zip(&pred.values)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / n)
}

/// Concordance at event times: each event subject `i` at `t` is compared
/// to every `j` still at risk with `time_j > t`, or censored at `t`, using
/// the current log-hazards `h[.][t]`. Ties count one half.
pub fn c_index(field: &HazardField, outcomes: &[SurvivalOutcome]) -> Result<f64> {
    if field.n_subjects() != outcomes.len() {
        return Err(Error::Shape(format!(
            "{} field rows but {} outcomes",
            field.n_subjects(),
            outcomes.len()
        )));
    }
    if let Some(o) = outcomes.iter().find(|o| o.time < 1 || o.time > field.horizon()) {
        return Err(Error::Data(format!("time {} outside the field horizon", o.time)));
    }
    if !outcomes.iter().any(|o| o.event) {
        return Err(Error::NoEvents);
    }
    let mut concordant = 0u64;
    let mut ties = 0u64;
    let mut comparable = 0u64;
    for (i, oi) in outcomes.iter().enumerate() {
        if !oi.event {
            continue;
        }
        let t = oi.time;
        let hi = field.get(i, t);
        for (j, oj) in outcomes.iter().enumerate() {
            if j == i || !(oj.time > t || (oj.time == t && !oj.event)) {
                continue;
            }
            comparable += 1;
            let hj = field.get(j, t);
            if hi > hj {
                concordant += 1;
            } else if hi == hj {
                ties += 1;
            }
        }
    }
    if comparable == 0 {
        return Err(Error::UndefinedMetric("no comparable pairs for concordance".into()));
    }
    Ok((concordant as f64 + 0.5 * ties as f64) / comparable as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    /// Penalty-free Efron loss.
    pub loss: f64,
    pub c_index: f64,
    pub gmse: Option<f64>,
    pub n_subjects: usize,
    pub n_events: usize,
}

pub fn evaluate(
    params: &ParamSet,
    panel: &ExposurePanel,
    outcomes: &[SurvivalOutcome],
    truth: Option<&ContributionGrid>,
) -> Result<Metrics> {
    let field = cumulative_effect(params, panel, EvalMode::Inference)?;
    let masks = build_masks(outcomes, panel.horizon())?;
    let loss = efron_loss(&field, &masks)?;
    let c = c_index(&field, outcomes)?;
    let gmse = truth
        .map(|t| model_grid(params, &t.x_grid, &t.l_grid).and_then(|p| gmse(t, &p)))
        .transpose()?;
    Ok(Metrics {
        loss,
        c_index: c,
        gmse,
        n_subjects: outcomes.len(),
        n_events: masks.total_events(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{init_params, NetConfig};

    #[test]
    fn identity_delta_grid() {
        let mut p = init_params(&NetConfig::new(vec![4], 3), 1).unwrap();
        p.zero_dense();
        p.kernel_mut().copy_from_slice(&[1.0, 0.0, 0.0, 0.0]);
        let g = model_grid(&p, &default_x_grid(), &lag_grid(3)).unwrap();
        for (ix, &x) in g.x_grid.iter().enumerate() {
            assert!((g.get(ix, 0) - x).abs() < 1e-15);
            assert!((1..4).all(|il| g.get(ix, il) == 0.0));
        }
    }

    #[test]
    fn model_grid_row_zero_and_rank_one() {
        let p = init_params(&NetConfig::new(vec![8, 8], 5), 4).unwrap();
        let g = model_grid(&p, &default_x_grid(), &lag_grid(5)).unwrap();
        assert!(g.row(0).iter().all(|v| v.abs() < 1e-15));
        // Every 2x2 minor of an outer product vanishes.
        for a in [3, 40, 100] {
            for b in [7, 55] {
                for (l1, l2) in [(0, 1), (2, 5)] {
                    let minor = g.get(a, l1) * g.get(b, l2) - g.get(a, l2) * g.get(b, l1);
                    assert!(minor.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn gmse_cases() {
        let p = init_params(&NetConfig::new(vec![8], 4), 4).unwrap();
        let a = model_grid(&p, &default_x_grid(), &lag_grid(4)).unwrap();
        assert_eq!(gmse(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        b.values.iter_mut().for_each(|v| *v += 0.3);
        assert!((gmse(&a, &b).unwrap() - 0.09).abs() < 1e-12);
        let short = model_grid(&p, &default_x_grid(), &lag_grid(3)).unwrap();
        assert!(gmse(&a, &short).is_err());
    }

    #[test]
    fn concordance_extremes() {
        let outcomes = [
            SurvivalOutcome::new(1, true),
            SurvivalOutcome::new(2, true),
            SurvivalOutcome::new(3, false),
        ];
        // The event subject always has the largest current log-hazard.
        let field = HazardField::new(3, 3, vec![5.0, 0.0, 0.0, 1.0, 4.0, 0.0, 0.0, 2.0, 0.0]).unwrap();
        assert_eq!(c_index(&field, &outcomes).unwrap(), 1.0);
        let flat = HazardField::new(3, 3, vec![0.7; 9]).unwrap();
        assert_eq!(c_index(&flat, &outcomes).unwrap(), 0.5);
        let neg = field.map(|v| -v);
        assert_eq!(c_index(&neg, &outcomes).unwrap(), 0.0);
    }

    #[test]
    fn censored_at_same_time_is_comparable() {
        let outcomes = [SurvivalOutcome::new(2, true), SurvivalOutcome::new(2, false)];
        let field = HazardField::new(2, 2, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(c_index(&field, &outcomes).unwrap(), 1.0);
        let tied = [SurvivalOutcome::new(2, true), SurvivalOutcome::new(2, true)];
        assert!(matches!(c_index(&field, &tied), Err(Error::UndefinedMetric(_))));
    }
}
