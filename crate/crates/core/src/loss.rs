//! Event/risk masks, the Efron negative log partial likelihood and the lag
//! kernel curvature penalty.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{HazardField, LagKernel};

/// Floor applied to shifted Efron risk sums before taking the log.
pub const RISK_SUM_FLOOR: f64 = 1e-300;

/// Observed time index (1-based) and event indicator for one subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SurvivalOutcome {
    pub time: usize,
    pub event: bool,
}

impl SurvivalOutcome {
    pub fn new(time: usize, event: bool) -> Self {
        Self { time, event }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskMasks {
    n_subjects: usize,
    horizon: usize,
    event: Vec<bool>,
    risk: Vec<bool>,
    /// `d_t`, indexed by `t - 1`.
    events_at: Vec<usize>,
}

impl RiskMasks {
    pub fn n_subjects(&self) -> usize {
        self.n_subjects
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn is_event(&self, i: usize, t: usize) -> bool {
        self.event[i * self.horizon + t - 1]
    }

    pub fn at_risk(&self, i: usize, t: usize) -> bool {
        self.risk[i * self.horizon + t - 1]
    }

    pub fn risk_mask(&self) -> &[bool] {
        &self.risk
    }

    pub fn events_at(&self, t: usize) -> usize {
        self.events_at[t - 1]
    }

    pub fn total_events(&self) -> usize {
        self.events_at.iter().sum()
    }
}

pub fn build_masks(outcomes: &[SurvivalOutcome], horizon: usize) -> Result<RiskMasks> {
    let n = outcomes.len();
    let mut event = vec![false; n * horizon];
    let mut risk = vec![false; n * horizon];
    let mut events_at = vec![0; horizon];
    for (i, o) in outcomes.iter().enumerate() {
        if o.time < 1 || o.time > horizon {
            return Err(Error::Data(format!(
                "subject {i}: time {} outside 1..={horizon}",
                o.time
            )));
        }
        risk[i * horizon..i * horizon + o.time].fill(true);
        if o.event {
            event[i * horizon + o.time - 1] = true;
            events_at[o.time - 1] += 1;
        }
    }
    Ok(RiskMasks {
        n_subjects: n,
        horizon,
        event,
        risk,
        events_at,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossValue {
    pub survival_part: f64,
    pub penalty_part: f64,
    pub total: f64,
    /// Number of events averaged over.
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfronOutput {
    pub value: f64,
    pub m: usize,
    /// Number of log terms whose argument hit [`RISK_SUM_FLOOR`].
    pub clamped: usize,
    /// `d loss / d h[i][t]`, same layout as the field, when requested.
    pub grad: Option<Vec<f64>>,
}

fn check_shapes(field: &HazardField, masks: &RiskMasks) -> Result<()> {
    if field.n_subjects() != masks.n_subjects || field.horizon() != masks.horizon {
        return Err(Error::Shape(format!(
            "field is {}x{}, masks are {}x{}",
            field.n_subjects(),
            field.horizon(),
            masks.n_subjects,
            masks.horizon
        )));
    }
    Ok(())
}

/// Efron-tied negative log partial likelihood averaged over the batch's
/// events, optionally with its gradient with respect to the field.
pub fn efron(field: &HazardField, masks: &RiskMasks, with_grad: bool) -> Result<EfronOutput> {
    check_shapes(field, masks)?;
    let m = masks.total_events();
    if m == 0 {
        return Err(Error::NoEvents);
    }
    let (n, horizon) = (masks.n_subjects, masks.horizon);
    let h = field.values();
    let mut grad = with_grad.then(|| vec![0.0; h.len()]);
    let mut total = 0.0;
    let mut clamped = 0;
    let inv_m = 1.0 / m as f64;
    let mut members: Vec<usize> = Vec::with_capacity(n);

    for t in 1..=horizon {
        let d = masks.events_at[t - 1];
        if d == 0 {
            continue;
        }
        members.clear();
        let mut shift = f64::NEG_INFINITY;
        for i in 0..n {
            let idx = i * horizon + t - 1;
            if masks.risk[idx] {
                let v = h[idx];
                if !v.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite log-hazard {v} for subject {i} at t={t}"
                    )));
                }
                shift = shift.max(v);
                members.push(idx);
            }
        }
        let mut risk_sum = 0.0;
        let mut event_sum = 0.0;
        let mut event_h = 0.0;
        for &idx in &members {
            let e = (h[idx] - shift).exp();
            risk_sum += e;
            if masks.event[idx] {
                event_sum += e;
                event_h += h[idx];
            }
        }
        let df = d as f64;
        let mut term = event_h;
        let mut inv_sum = 0.0;
        let mut frac_inv_sum = 0.0;
        for j in 0..d {
            let frac = j as f64 / df;
            let mut denom = risk_sum - frac * event_sum;
            if denom < RISK_SUM_FLOOR {
                denom = RISK_SUM_FLOOR;
                clamped += 1;
            }
            term -= shift + denom.ln();
            inv_sum += 1.0 / denom;
            frac_inv_sum += frac / denom;
        }
        total += term;

        if let Some(g) = grad.as_mut() {
            for &idx in &members {
                let e = (h[idx] - shift).exp();
                g[idx] += if masks.event[idx] {
                    -inv_m * (1.0 - e * (inv_sum - frac_inv_sum))
                } else {
                    inv_m * e * inv_sum
                };
            }
        }
    }
    Ok(EfronOutput {
        value: -total * inv_m,
        m,
        clamped,
        grad,
    })
}

/// Survival part of the loss only.
pub fn efron_loss(field: &HazardField, masks: &RiskMasks) -> Result<f64> {
    efron(field, masks, false).map(|o| o.value)
}

/// `lambda / (L - 1) * sum_l (w[l+2] - 2 w[l+1] + w[l])^2`; zero for `L < 2`.
pub fn smoothness_penalty(kernel: &LagKernel, strength: f64) -> f64 {
    let w = kernel.weights();
    let lag = kernel.lag();
    if lag < 2 || strength == 0.0 {
        return 0.0;
    }
    let ss: f64 = w.windows(3).map(|s| (s[2] - 2.0 * s[1] + s[0]).powi(2)).sum();
    strength * ss / (lag - 1) as f64
}

/// Mean squared second difference of a kernel (penalty at unit strength).
pub fn curvature(kernel: &LagKernel) -> f64 {
    smoothness_penalty(kernel, 1.0)
}

pub fn smoothness_penalty_grad(kernel: &LagKernel, strength: f64) -> Vec<f64> {
    let w = kernel.weights();
    let lag = kernel.lag();
    let mut g = vec![0.0; w.len()];
    if lag < 2 || strength == 0.0 {
        return g;
    }
    let scale = 2.0 * strength / (lag - 1) as f64;
    for l in 0..=lag - 2 {
        let s = scale * (w[l + 2] - 2.0 * w[l + 1] + w[l]);
        g[l] += s;
        g[l + 1] -= 2.0 * s;
        g[l + 2] += s;
    }
    g
}

pub fn total_loss(field: &HazardField, masks: &RiskMasks, kernel: &LagKernel, strength: f64) -> Result<LossValue> {
    let surv = efron(field, masks, false)?;
    let penalty = smoothness_penalty(kernel, strength);
    Ok(LossValue {
        survival_part: surv.value,
        penalty_part: penalty,
        total: surv.value + penalty,
        m: surv.m,
    })
}
