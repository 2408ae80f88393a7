//! Scenario-based simulation of exposure histories and permutation-assigned
//! survival outcomes.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::SurvivalOutcome;
use crate::model::{lag_convolve, ExposurePanel, HazardField, LagKernel};
use crate::rng::{self, Stream};

pub const SCENARIO_LAG: usize = 20;

/// Log-hazard amplitude used by [`SimConfig::default`].
pub const DEFAULT_AMPLITUDE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioId {
    S1,
    S2,
    S3,
    S4,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 4] = [ScenarioId::S1, ScenarioId::S2, ScenarioId::S3, ScenarioId::S4];

    pub fn label(self) -> &'static str {
        match self {
            ScenarioId::S1 => "linear-current",
            ScenarioId::S2 => "plateau-current",
            ScenarioId::S3 => "plateau-decay",
            ScenarioId::S4 => "plateau-stepwise",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "S1" => Ok(ScenarioId::S1),
            "S2" => Ok(ScenarioId::S2),
            "S3" => Ok(ScenarioId::S3),
            "S4" => Ok(ScenarioId::S4),
            other => Err(Error::Config(format!("unknown scenario '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExposureShape {
    /// `f(x) = x`
    Linear,
    /// `f(x) = min(2x, 1)`
    Plateau,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LagShape {
    /// Delta at lag 0.
    Current,
    /// `exp(-l / 5)`
    Decay,
    /// Indicator of `3 <= l <= 10`.
    Stepwise,
}

/// True exposure and lag functions of a simulation scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub id: ScenarioId,
    pub exposure: ExposureShape,
    pub lag_shape: LagShape,
    pub lag: usize,
    /// Multiplier on the exposure function, i.e. the log-hazard scale.
    pub amplitude: f64,
}

impl Scenario {
    pub fn with_amplitude(self, amplitude: f64) -> Self {
        Self { amplitude, ..self }
    }

    pub fn exposure_effect(&self, x: f64) -> f64 {
        let base = match self.exposure {
            ExposureShape::Linear => x,
            ExposureShape::Plateau => (2.0 * x).min(1.0),
        };
        self.amplitude * base
    }

    pub fn lag_weight(&self, l: usize) -> f64 {
        if l > self.lag {
            return 0.0;
        }
        match self.lag_shape {
            LagShape::Current => f64::from(l == 0),
            LagShape::Decay => (-(l as f64) / 5.0).exp(),
            LagShape::Stepwise => f64::from((3..=10).contains(&l)),
        }
    }

    pub fn contribution(&self, x: f64, l: usize) -> f64 {
        self.exposure_effect(x) * self.lag_weight(l)
    }

    pub fn kernel(&self) -> LagKernel {
        LagKernel((0..=self.lag).map(|l| self.lag_weight(l)).collect())
    }

    /// The lag function rescaled to unit norm, the form a fitted model can
    /// identify.
    pub fn unit_kernel(&self) -> LagKernel {
        let k = self.kernel();
        let n = k.norm();
        LagKernel(k.0.iter().map(|w| w / n).collect())
    }
}

/// Concrete forms of each scenario at unit amplitude with `L = 20`.
pub fn scenario_functions(id: ScenarioId) -> Scenario {
    let (exposure, lag_shape) = match id {
        ScenarioId::S1 => (ExposureShape::Linear, LagShape::Current),
        ScenarioId::S2 => (ExposureShape::Plateau, LagShape::Current),
        ScenarioId::S3 => (ExposureShape::Plateau, LagShape::Decay),
        ScenarioId::S4 => (ExposureShape::Plateau, LagShape::Stepwise),
    };
    Scenario {
        id,
        exposure,
        lag_shape,
        lag: SCENARIO_LAG,
        amplitude: 1.0,
    }
}

/// I.i.d. uniform exposures on `[0, 1]`.
pub fn gen_exposures(n: usize, horizon: usize, seed: u64) -> Result<ExposurePanel> {
    gen_exposures_with(n, horizon, seed, 0.0)
}

/// Exposures `x_t = rho * x_{t-1} + (1 - rho) * u_t` with `u_t ~ U[0, 1]`;
/// `rho = 0` is the i.i.d. case.
pub fn gen_exposures_with(n: usize, horizon: usize, seed: u64, rho: f64) -> Result<ExposurePanel> {
    if n == 0 || horizon == 0 {
        return Err(Error::Config("exposure panel needs N >= 1 and T >= 1".into()));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Config(format!("autocorrelation {rho} outside [0, 1)")));
    }
    let mut r = rng::seeded(rng::derive_seed(seed, Stream::Exposure, 0));
    let mut values = Vec::with_capacity(n * horizon);
    for _ in 0..n {
        let mut prev: f64 = r.random();
        values.push(prev);
        for _ in 1..horizon {
            let u: f64 = r.random();
            prev = rho * prev + (1.0 - rho) * u;
            values.push(prev);
        }
    }
    ExposurePanel::new(n, horizon, values)
}

/// Log-hazard implied by the scenario's true functions.
pub fn true_hazard(panel: &ExposurePanel, scenario: &Scenario) -> HazardField {
    let kernel = scenario.kernel();
    let horizon = panel.horizon();
    let mut values = Vec::with_capacity(panel.values().len());
    for i in 0..panel.n_subjects() {
        let f: Vec<f64> = panel.row(i).iter().map(|&x| scenario.exposure_effect(x)).collect();
        values.extend(lag_convolve(&kernel, &f));
    }
    HazardField::new(panel.n_subjects(), horizon, values).expect("shape preserved")
}

/// Permutational assignment of `(time, event)` marginals to subjects.
///
/// Pairs are processed in increasing time (ties in seeded random order).
/// An event at `t` goes to an unassigned subject drawn with probability
/// proportional to `exp(h[i][t])`; a censoring goes to one drawn uniformly.
pub fn perm_algo(field: &HazardField, marginals: &[SurvivalOutcome], seed: u64) -> Result<Vec<SurvivalOutcome>> {
    let n = field.n_subjects();
    if marginals.len() != n {
        return Err(Error::Shape(format!(
            "{} marginal pairs for {n} subjects",
            marginals.len()
        )));
    }
    if !marginals.iter().any(|m| m.event) {
        return Err(Error::NoEvents);
    }
    if let Some(m) = marginals.iter().find(|m| m.time < 1 || m.time > field.horizon()) {
        return Err(Error::Data(format!(
            "marginal time {} outside 1..={}",
            m.time,
            field.horizon()
        )));
    }
    let mut r = rng::seeded(rng::derive_seed(seed, Stream::Permutation, 0));
    let mut pairs = marginals.to_vec();
    pairs.shuffle(&mut r);
    pairs.sort_by_key(|p| p.time);

    let mut available: Vec<usize> = (0..n).collect();
    let mut assigned = vec![None; n];
    let mut weights = Vec::with_capacity(n);
    for pair in pairs {
        let pos = if pair.event {
            let shift = available
                .iter()
                .map(|&i| field.get(i, pair.time))
                .fold(f64::NEG_INFINITY, f64::max);
            weights.clear();
            weights.extend(available.iter().map(|&i| (field.get(i, pair.time) - shift).exp()));
            let total: f64 = weights.iter().sum();
            let mut u = r.random::<f64>() * total;
            let mut pick = weights.len() - 1;
            for (k, &w) in weights.iter().enumerate() {
                if u < w {
                    pick = k;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            r.random_range(0..available.len())
        };
        let subject = available.swap_remove(pos);
        assigned[subject] = Some(pair);
    }
    Ok(assigned.into_iter().map(|a| a.expect("every subject assigned")).collect())
}

fn default_n() -> usize {
    5000
}
fn default_horizon() -> usize {
    100
}
fn default_event_rate() -> f64 {
    0.5
}
fn default_amplitude() -> f64 {
    DEFAULT_AMPLITUDE
}
fn default_scenario() -> ScenarioId {
    ScenarioId::S1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "default_scenario")]
    pub scenario: ScenarioId,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_event_rate")]
    pub event_rate: f64,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default)]
    pub autocorrelation: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            scenario: default_scenario(),
            n: default_n(),
            horizon: default_horizon(),
            event_rate: default_event_rate(),
            amplitude: default_amplitude(),
            autocorrelation: 0.0,
        }
    }
}

impl SimConfig {
    pub fn new(scenario: ScenarioId, n: usize, horizon: usize) -> Self {
        Self {
            scenario,
            n,
            horizon,
            ..Default::default()
        }
    }

    pub fn scenario(&self) -> Scenario {
        scenario_functions(self.scenario).with_amplitude(self.amplitude)
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    pub panel: ExposurePanel,
    pub outcomes: Vec<SurvivalOutcome>,
    pub true_field: HazardField,
    pub scenario: Scenario,
    pub seed: u64,
}

/// `ceil(event_rate * N)` event times and `N` minus that many censoring
/// times, all uniform on `1..=T`, assigned by [`perm_algo`].
pub fn simulate_dataset(cfg: &SimConfig, seed: u64) -> Result<SimulatedDataset> {
    if !(cfg.event_rate > 0.0 && cfg.event_rate <= 1.0) {
        return Err(Error::Config(format!("event rate {} outside (0, 1]", cfg.event_rate)));
    }
    if !cfg.amplitude.is_finite() {
        return Err(Error::Config("amplitude must be finite".into()));
    }
    let scenario = cfg.scenario();
    let panel = gen_exposures_with(cfg.n, cfg.horizon, seed, cfg.autocorrelation)?;
    let true_field = true_hazard(&panel, &scenario);
    let n_events = ((cfg.event_rate * cfg.n as f64).ceil() as usize).min(cfg.n);
    let mut r = rng::seeded(rng::derive_seed(seed, Stream::Marginals, 0));
    let marginals: Vec<SurvivalOutcome> = (0..cfg.n)
        .map(|k| SurvivalOutcome::new(r.random_range(1..=cfg.horizon), k < n_events))
        .collect();
    let outcomes = perm_algo(&true_field, &marginals, seed)?;
    Ok(SimulatedDataset {
        panel,
        outcomes,
        true_field,
        scenario,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_values() {
        let s1 = scenario_functions(ScenarioId::S1);
        assert_eq!(s1.contribution(1.0, 0), 1.0);
        for id in ScenarioId::ALL {
            let s = scenario_functions(id);
            assert!((0..=20).all(|l| s.contribution(0.0, l) == 0.0));
        }
        assert_eq!(scenario_functions(ScenarioId::S2).lag_weight(5), 0.0);
        let s4 = scenario_functions(ScenarioId::S4);
        assert_eq!(s4.lag_weight(2), 0.0);
        assert_eq!(s4.lag_weight(3), 1.0);
        assert_eq!(s4.lag_weight(10), 1.0);
        assert_eq!(s4.lag_weight(11), 0.0);
        assert!((scenario_functions(ScenarioId::S3).exposure_effect(0.25) - 0.5).abs() < 1e-15);
        assert!((s4.unit_kernel().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scenario_parsing() {
        assert_eq!("s3".parse::<ScenarioId>().unwrap(), ScenarioId::S3);
        assert!("S5".parse::<ScenarioId>().is_err());
    }

    #[test]
    fn exposures_in_unit_interval() {
        let p = gen_exposures(50, 30, 1).unwrap();
        assert!(p.values().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(p, gen_exposures(50, 30, 1).unwrap());
        let ar = gen_exposures_with(20, 40, 1, 0.8).unwrap();
        assert!(ar.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn exposure_mean_is_half() {
        let p = gen_exposures(5000, 100, 2024).unwrap();
        let mean = p.values().iter().sum::<f64>() / p.values().len() as f64;
        assert!((mean - 0.5).abs() < 0.01, "{mean}");
    }

    #[test]
    fn hazard_identities() {
        let s1 = scenario_functions(ScenarioId::S1);
        let zero = true_hazard(&ExposurePanel::zeros(3, 10), &s1);
        assert!(zero.values().iter().all(|&v| v == 0.0));
        let p = gen_exposures(4, 25, 3).unwrap();
        assert_eq!(true_hazard(&p, &s1).values(), p.values());
    }

    #[test]
    fn single_subject_permutation() {
        let field = HazardField::new(1, 3, vec![0.0; 3]).unwrap();
        let out = perm_algo(&field, &[SurvivalOutcome::new(2, true)], 0).unwrap();
        assert_eq!(out, [SurvivalOutcome::new(2, true)]);
    }

    #[test]
    fn permutation_is_a_bijection() {
        let p = gen_exposures(40, 20, 3).unwrap();
        let field = true_hazard(&p, &scenario_functions(ScenarioId::S4).with_amplitude(2.0));
        let marg: Vec<_> = (0..40).map(|i| SurvivalOutcome::new(1 + i % 20, i % 3 == 0)).collect();
        let out = perm_algo(&field, &marg, 9).unwrap();
        let mut a = marg.clone();
        let mut b = out.clone();
        a.sort_by_key(|o| (o.time, o.event));
        b.sort_by_key(|o| (o.time, o.event));
        assert_eq!(a, b);
    }

    #[test]
    fn permutation_rejects_bad_marginals() {
        let field = HazardField::new(2, 3, vec![0.0; 6]).unwrap();
        assert!(perm_algo(&field, &[SurvivalOutcome::new(1, false); 2], 0).is_err());
        assert!(perm_algo(&field, &[SurvivalOutcome::new(1, true)], 0).is_err());
        assert!(perm_algo(&field, &[SurvivalOutcome::new(4, true), SurvivalOutcome::new(1, true)], 0).is_err());
    }

    #[test]
    fn simulate_counts_and_determinism() {
        let cfg = SimConfig {
            event_rate: 0.33,
            ..SimConfig::new(ScenarioId::S2, 101, 30)
        };
        let a = simulate_dataset(&cfg, 5).unwrap();
        assert_eq!(a.outcomes.iter().filter(|o| o.event).count(), 34);
        let b = simulate_dataset(&cfg, 5).unwrap();
        assert_eq!(a.outcomes, b.outcomes);
        assert_eq!(a.panel, b.panel);
        assert!(a.outcomes.iter().all(|o| (1..=30).contains(&o.time)));
    }
}
