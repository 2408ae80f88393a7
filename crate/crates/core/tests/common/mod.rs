#![allow(dead_code)]

use lagsurv::{HazardField, SurvivalOutcome};
use rand::Rng;

/// Negative log partial likelihood with Efron ties, evaluated by direct sums
/// over subjects (no shifting, no masks).
pub fn efron_brute(h: &HazardField, outcomes: &[SurvivalOutcome]) -> f64 {
    let mut total = 0.0;
    let mut m = 0;
    for t in 1..=h.horizon() {
        let dead: Vec<usize> = (0..outcomes.len())
            .filter(|&i| outcomes[i].event && outcomes[i].time == t)
            .collect();
        if dead.is_empty() {
            continue;
        }
        let d = dead.len() as f64;
        let mut risk = 0.0;
        for (j, o) in outcomes.iter().enumerate() {
            if o.time >= t {
                risk += h.get(j, t).exp();
            }
        }
        let tied: f64 = dead.iter().map(|&i| h.get(i, t).exp()).sum();
        for (k, &i) in dead.iter().enumerate() {
            total += h.get(i, t) - (risk - k as f64 / d * tied).ln();
        }
        m += dead.len();
    }
    -total / m as f64
}

/// Cox partial likelihood with every event in its own risk set (Breslow form).
pub fn breslow(h: &HazardField, outcomes: &[SurvivalOutcome]) -> f64 {
    let mut total = 0.0;
    let mut m = 0;
    for (i, oi) in outcomes.iter().enumerate() {
        if !oi.event {
            continue;
        }
        let t = oi.time;
        let denom: f64 = outcomes
            .iter()
            .enumerate()
            .filter(|(_, o)| o.time >= t)
            .map(|(j, _)| h.get(j, t).exp())
            .sum();
        total += h.get(i, t) - denom.ln();
        m += 1;
    }
    -total / m as f64
}

/// Random outcomes with at least one event; `ties` allows several events at
/// one time.
pub fn random_outcomes(r: &mut impl Rng, n: usize, horizon: usize, ties: bool) -> Vec<SurvivalOutcome> {
    let mut out: Vec<SurvivalOutcome> = (0..n)
        .map(|_| SurvivalOutcome::new(r.random_range(1..=horizon), r.random_bool(0.6)))
        .collect();
    if !ties {
        let mut used = std::collections::HashSet::new();
        for o in &mut out {
            if o.event && !used.insert(o.time) {
                o.event = false;
            }
        }
    }
    if !out.iter().any(|o| o.event) {
        out[0].event = true;
    }
    out
}

pub fn random_field(r: &mut impl Rng, n: usize, horizon: usize, scale: f64) -> HazardField {
    let v = (0..n * horizon).map(|_| r.random_range(-scale..scale)).collect();
    HazardField::new(n, horizon, v).unwrap()
}

pub fn has_ties(outcomes: &[SurvivalOutcome]) -> bool {
    let mut seen = std::collections::HashSet::new();
    outcomes.iter().filter(|o| o.event).any(|o| !seen.insert(o.time))
}
