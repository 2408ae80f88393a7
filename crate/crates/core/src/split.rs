//! Train/test partitions stratified by event status and observed-time
//! quantile bin.

use std::collections::BTreeMap;

use log::warn;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::loss::SurvivalOutcome;
use crate::rng::{self, Stream};

pub const DEFAULT_TIME_BINS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Stratum label per subject: `2 * time_bin + event`.
    pub strata: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Stratum label per subject: event indicator crossed with the quantile
/// bin of the observed time.
pub fn strata_labels(outcomes: &[SurvivalOutcome], time_bins: usize) -> Vec<usize> {
    let n = outcomes.len();
    let bins = time_bins.max(1);
    let mut sorted: Vec<usize> = outcomes.iter().map(|o| o.time).collect();
    sorted.sort_unstable();
    let cuts: Vec<usize> = (1..bins).map(|k| sorted[(k * n / bins).min(n.saturating_sub(1))]).collect();
    outcomes
        .iter()
        .map(|o| {
            let bin = cuts.iter().filter(|&&c| o.time >= c).count();
            2 * bin + usize::from(o.event)
        })
        .collect()
}

fn grouped(labels: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &s) in labels.iter().enumerate() {
        groups.entry(s).or_default().push(i);
    }
    groups
}

/// Stratified split without the minimum-size check; used for inner
/// validation holdouts.
pub(crate) fn split_unchecked(outcomes: &[SurvivalOutcome], ratio: f64, time_bins: usize, seed: u64) -> SplitPlan {
    let strata = strata_labels(outcomes, time_bins);
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut warnings = Vec::new();
    for (label, mut members) in grouped(&strata) {
        let mut r = rng::seeded(rng::derive_seed(seed, Stream::Split, label as u64));
        members.shuffle(&mut r);
        if members.len() == 1 {
            let msg = format!("stratum {label} has a single subject; assigned to train");
            warn!("{msg}");
            warnings.push(msg);
            train.push(members[0]);
            continue;
        }
        let n_train = (ratio * members.len() as f64).floor() as usize;
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    SplitPlan {
        train,
        test,
        strata,
        warnings,
    }
}

pub fn stratified_split(outcomes: &[SurvivalOutcome], ratio: f64, time_bins: usize, seed: u64) -> Result<SplitPlan> {
    if outcomes.len() < 10 {
        return Err(Error::Data(format!(
            "stratified split needs at least 10 subjects, got {}",
            outcomes.len()
        )));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio {ratio} outside (0, 1)")));
    }
    Ok(split_unchecked(outcomes, ratio, time_bins, seed))
}

/// Stratified fold id per subject, `0..folds`.
pub fn stratified_folds(outcomes: &[SurvivalOutcome], folds: usize, time_bins: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::Config(format!("cross-validation needs at least 2 folds, got {folds}")));
    }
    if outcomes.len() < folds {
        return Err(Error::Data(format!(
            "{} subjects cannot fill {folds} folds",
            outcomes.len()
        )));
    }
    let strata = strata_labels(outcomes, time_bins);
    let mut assignment = vec![0; outcomes.len()];
    let mut next = 0;
    for (label, mut members) in grouped(&strata) {
        let mut r = rng::seeded(rng::derive_seed(seed, Stream::Fold, label as u64));
        members.shuffle(&mut r);
        for i in members {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    Ok(assignment)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spread(n: usize) -> Vec<SurvivalOutcome> {
        (0..n).map(|i| SurvivalOutcome::new(i + 1, i % 2 == 0)).collect()
    }

    #[test]
    fn uniform_spread_split() {
        let outcomes = spread(100);
        let plan = stratified_split(&outcomes, 0.9, 5, 1).unwrap();
        assert_eq!(plan.test.len(), 10);
        let rate = plan.test.iter().filter(|&&i| outcomes[i].event).count() as f64 / 10.0;
        assert!((rate - 0.5).abs() <= 0.1);
        let mut all: Vec<usize> = plan.train.iter().chain(&plan.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn degenerate_strata() {
        let outcomes = vec![SurvivalOutcome::new(7, false); 40];
        let plan = stratified_split(&outcomes, 0.9, 5, 3).unwrap();
        assert!(plan.strata.iter().all(|&s| s == plan.strata[0]));
        assert_eq!(plan.train.len(), 36);
        assert_eq!(plan.test.len(), 4);
    }

    #[test]
    fn deterministic() {
        let outcomes = spread(57);
        assert_eq!(
            stratified_split(&outcomes, 0.9, 5, 8).unwrap(),
            stratified_split(&outcomes, 0.9, 5, 8).unwrap()
        );
        assert_ne!(
            stratified_split(&outcomes, 0.9, 5, 8).unwrap().test,
            stratified_split(&outcomes, 0.9, 5, 9).unwrap().test
        );
    }

    #[test]
    fn singleton_stratum_goes_to_train() {
        let mut outcomes = vec![SurvivalOutcome::new(5, false); 12];
        outcomes.push(SurvivalOutcome::new(5, true));
        let plan = stratified_split(&outcomes, 0.9, 1, 0).unwrap();
        assert!(plan.train.contains(&12));
        assert_eq!(plan.warnings.len(), 1);
    }

    #[test]
    fn per_stratum_ratio_within_one() {
        let outcomes: Vec<_> = (0..237).map(|i| SurvivalOutcome::new(1 + (i * 7) % 50, i % 3 != 0)).collect();
        let plan = stratified_split(&outcomes, 0.9, 5, 4).unwrap();
        for (_, members) in grouped(&plan.strata) {
            let n_test = members.iter().filter(|i| plan.test.contains(i)).count() as f64;
            assert!((n_test - 0.1 * members.len() as f64).abs() <= 1.0);
        }
    }

    #[test]
    fn too_small() {
        assert!(stratified_split(&spread(9), 0.9, 5, 0).is_err());
    }

    #[test]
    fn folds_balanced() {
        let outcomes = spread(103);
        let f = stratified_folds(&outcomes, 5, 5, 2).unwrap();
        let mut counts = [0; 5];
        f.iter().for_each(|&k| counts[k] += 1);
        assert!(counts.iter().all(|&c| (20..=21).contains(&c)), "{counts:?}");
        assert_eq!(f, stratified_folds(&outcomes, 5, 5, 2).unwrap());
        assert!(stratified_folds(&outcomes, 1, 5, 2).is_err());
    }
}
