//! Central finite-difference verification of analytic gradients.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::EvalMode;
use crate::objective::{loss_and_grad, Batch};
use crate::params::ParamSet;

/// Anything with a value and an analytic gradient over a flat parameter
/// vector.
pub trait Objective {
    fn value(&self, theta: &[f64]) -> Result<f64>;
    fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>>;
    fn name(&self, _index: usize) -> String {
        String::new()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradEntry {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradReport {
    pub entries: Vec<GradEntry>,
    pub max_rel_error: f64,
    pub step: f64,
}

impl GradReport {
    pub fn worst(&self) -> Option<&GradEntry> {
        self.entries
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

pub fn check_objective(obj: &impl Objective, theta: &[f64], step: f64) -> Result<GradReport> {
    if !(step > 0.0 && step <= 1e-2) {
        return Err(Error::Config(format!("finite-difference step {step} outside (0, 1e-2]")));
    }
    let analytic = obj.gradient(theta)?;
    let mut entries = Vec::with_capacity(theta.len());
    let mut probe = theta.to_vec();
    for i in 0..theta.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let up = obj.value(&probe)?;
        probe[i] = orig - step;
        let down = obj.value(&probe)?;
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        entries.push(GradEntry {
            name: obj.name(i),
            index: i,
            analytic: analytic[i],
            numeric,
            rel_error: relative_error(analytic[i], numeric),
        });
    }
    let max_rel_error = entries.iter().map(|e| e.rel_error).fold(0.0, f64::max);
    Ok(GradReport {
        entries,
        max_rel_error,
        step,
    })
}

/// Total survival loss of a model on a batch, as a function of the flat
/// parameter vector. Always evaluated in inference mode.
pub struct SurvivalObjective<'a> {
    pub params: &'a ParamSet,
    pub batch: &'a Batch,
    pub strength: f64,
}

impl SurvivalObjective<'_> {
    fn with(&self, theta: &[f64]) -> ParamSet {
        let mut p = self.params.clone();
        p.values.copy_from_slice(theta);
        p
    }
}

impl Objective for SurvivalObjective<'_> {
    fn value(&self, theta: &[f64]) -> Result<f64> {
        Ok(loss_and_grad(&self.with(theta), self.batch, self.strength, EvalMode::Inference)?
            .loss
            .total)
    }

    fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(loss_and_grad(&self.with(theta), self.batch, self.strength, EvalMode::Inference)?.grad)
    }

    fn name(&self, index: usize) -> String {
        self.params
            .layout()
            .param_slots()
            .into_iter()
            .find(|s| s.range().contains(&index))
            .map(|s| format!("{}[{}]", s.name, index - s.offset))
            .unwrap_or_default()
    }
}

/// Compares analytic and central-difference gradients of the total loss for
/// every parameter. Fails with [`Error::NoEvents`] on event-free batches.
pub fn grad_check(params: &ParamSet, batch: &Batch, strength: f64, step: f64) -> Result<GradReport> {
    if batch.n_events() == 0 {
        return Err(Error::NoEvents);
    }
    let obj = SurvivalObjective {
        params,
        batch,
        strength,
    };
    check_objective(&obj, &params.values, step)
}
