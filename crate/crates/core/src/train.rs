//! Fitting with projected Adam steps and early stopping, the smoothness
//! sweep, and grid cross-validation.

use log::{info, warn};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{c_index, ContributionGrid};
use crate::loss::{curvature, smoothness_penalty, LossValue, SurvivalOutcome};
use crate::model::{cumulative_effect, project_kernel, EvalMode, ExposurePanel, LagKernel};
use crate::objective::{loss_and_grad, survival_loss, Batch};
use crate::optim::Adam;
use crate::params::{init_params, uniform_kernel, NetConfig, ParamSet};
use crate::rng::{self, derive_seed, Stream};
use crate::split::{split_unchecked, stratified_folds, stratified_split, SplitPlan, DEFAULT_TIME_BINS};

/// Subjects per optimizer step; `"full"` in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSize {
    Full,
    Subjects(usize),
}

impl Serialize for BatchSize {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BatchSize::Full => s.serialize_str("full"),
            BatchSize::Subjects(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for BatchSize {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(n) => Ok(BatchSize::Subjects(n as usize)),
            Raw::Word(w) if w == "full" => Ok(BatchSize::Full),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "expected \"full\" or a subject count, got \"{w}\""
            ))),
        }
    }
}

fn d_lr() -> f64 {
    1e-3
}
fn d_epochs() -> usize {
    500
}
fn d_batch() -> BatchSize {
    BatchSize::Full
}
fn d_patience() -> usize {
    20
}
fn d_lambdas() -> Vec<f64> {
    vec![0.0, 1.0, 5.0, 10.0]
}
fn d_folds() -> usize {
    5
}
fn d_train_ratio() -> f64 {
    0.9
}
fn d_valid() -> f64 {
    0.1
}
fn d_bins() -> usize {
    DEFAULT_TIME_BINS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_epochs")]
    pub max_epochs: usize,
    #[serde(default = "d_batch")]
    pub batch_size: BatchSize,
    #[serde(default = "d_patience")]
    pub patience: usize,
    #[serde(default = "d_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub net: NetConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_folds")]
    pub folds: usize,
    /// Fraction of subjects assigned to train in the train/test split.
    #[serde(default = "d_train_ratio")]
    pub train_ratio: f64,
    /// Fraction of the fitting data held out for early stopping; zero
    /// monitors the training loss instead.
    #[serde(default = "d_valid")]
    pub validation_fraction: f64,
    #[serde(default = "d_bins")]
    pub time_bins: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: d_lr(),
            max_epochs: d_epochs(),
            batch_size: d_batch(),
            patience: d_patience(),
            lambdas: d_lambdas(),
            net: NetConfig::default(),
            seed: 0,
            folds: d_folds(),
            train_ratio: d_train_ratio(),
            validation_fraction: d_valid(),
            time_bins: d_bins(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if self.max_epochs == 0 || self.patience == 0 || self.time_bins == 0 {
            return bad("max_epochs, patience and time_bins must be positive".into());
        }
        if self.batch_size == BatchSize::Subjects(0) {
            return bad("batch size must be positive".into());
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            return bad(format!("smoothness strength {l} must be >= 0"));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return bad(format!("train ratio {} outside (0, 1)", self.train_ratio));
        }
        if !(0.0..0.5).contains(&self.validation_fraction) {
            return bad(format!("validation fraction {} outside [0, 0.5)", self.validation_fraction));
        }
        Ok(())
    }

    fn uses_training_mode(&self) -> bool {
        self.net.dropout > 0.0 || self.net.batch_norm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over the epoch's batches of the loss before each update.
    pub train: LossValue,
    /// Penalty-free loss on the monitoring set after the epoch.
    pub validation: f64,
}

/// State visible to a per-step observer.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo {
    pub epoch: usize,
    pub step: usize,
    pub loss: LossValue,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: ParamSet,
    pub history: Vec<EpochRecord>,
    /// Epoch of the returned parameters; 0 means the initialization.
    pub best_epoch: usize,
    pub best_validation: f64,
    pub kernel_resets: usize,
    pub clamped_terms: usize,
    pub skipped_batches: usize,
}

fn project_in_place(params: &mut ParamSet, opt: &mut Adam) -> bool {
    match project_kernel(&LagKernel(params.kernel().to_vec())) {
        Ok(k) => {
            params.kernel_mut().copy_from_slice(&k.0);
            false
        }
        Err(_) => {
            let len = params.kernel().len();
            params.kernel_mut().copy_from_slice(&uniform_kernel(len));
            opt.reset_range(params.layout().kernel.range());
            true
        }
    }
}

pub fn fit(config: &TrainConfig, panel: &ExposurePanel, outcomes: &[SurvivalOutcome], strength: f64) -> Result<FitResult> {
    fit_observed(config, panel, outcomes, strength, |_, _| {})
}

/// [`fit`] with a callback after every projected parameter update.
pub fn fit_observed(
    config: &TrainConfig,
    panel: &ExposurePanel,
    outcomes: &[SurvivalOutcome],
    strength: f64,
    mut observer: impl FnMut(&StepInfo, &ParamSet),
) -> Result<FitResult> {
    config.validate()?;
    if !(strength >= 0.0 && strength.is_finite()) {
        return Err(Error::Config(format!("smoothness strength {strength} must be >= 0")));
    }
    let data = Batch::new(panel.clone(), outcomes.to_vec())?;
    if data.n_events() == 0 {
        return Err(Error::NoEvents);
    }

    let (fit_set, monitor) = if config.validation_fraction > 0.0 {
        let plan = split_unchecked(
            outcomes,
            1.0 - config.validation_fraction,
            config.time_bins,
            derive_seed(config.seed, Stream::Validation, 0),
        );
        let train = data.select(&plan.train)?;
        let valid = data.select(&plan.test)?;
        if valid.n_events() == 0 || train.n_events() == 0 {
            warn!("validation holdout has no events; monitoring the training loss");
            (data.clone(), None)
        } else {
            (train, Some(valid))
        }
    } else {
        (data.clone(), None)
    };
    let monitor_loss = |p: &ParamSet| -> Result<f64> { survival_loss(p, monitor.as_ref().unwrap_or(&fit_set)) };

    let mut params = init_params(&config.net, config.seed)?;
    let mut opt = Adam::new(params.values.len(), config.learning_rate);
    let mut best = params.clone();
    let mut best_validation = monitor_loss(&params)?;
    let mut best_epoch = 0;
    let mut history = Vec::new();
    let mut kernel_resets = 0;
    let mut clamped_terms = 0;
    let mut skipped_batches = 0;
    let mut step = 0;
    let mut order: Vec<usize> = (0..fit_set.len()).collect();

    for epoch in 1..=config.max_epochs {
        let batches: Vec<Batch> = match config.batch_size {
            BatchSize::Subjects(b) if b < fit_set.len() => {
                let mut r = rng::seeded(derive_seed(config.seed, Stream::Epoch, epoch as u64));
                order.shuffle(&mut r);
                order
                    .chunks(b)
                    .map(|c| fit_set.select(c))
                    .collect::<Result<_>>()?
            }
            _ => vec![fit_set.clone()],
        };
        let mut sums = (0.0, 0.0, 0.0, 0usize, 0usize);
        for batch in &batches {
            if batch.n_events() == 0 {
                skipped_batches += 1;
                continue;
            }
            step += 1;
            let mode = if config.uses_training_mode() {
                EvalMode::Training {
                    seed: derive_seed(config.seed, Stream::Dropout, step as u64),
                }
            } else {
                EvalMode::Inference
            };
            let ev = loss_and_grad(&params, batch, strength, mode)?;
            if !ev.loss.total.is_finite() || ev.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite loss or gradient at epoch {epoch}, step {step}"
                )));
            }
            clamped_terms += ev.clamped;
            opt.step(&mut params.values, &ev.grad);
            if params.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("parameters diverged at epoch {epoch}")));
            }
            if !ev.batch_stats.is_empty() {
                crate::dense::update_running_stats(&mut params, &ev.batch_stats);
            }
            if project_in_place(&mut params, &mut opt) {
                kernel_resets += 1;
                warn!("degenerate kernel at step {step}; re-initialized to uniform");
            }
            sums.0 += ev.loss.survival_part;
            sums.1 += ev.loss.penalty_part;
            sums.2 += ev.loss.total;
            sums.3 += ev.loss.m;
            sums.4 += 1;
            observer(
                &StepInfo {
                    epoch,
                    step,
                    loss: ev.loss,
                },
                &params,
            );
        }
        if sums.4 == 0 {
            return Err(Error::NoEvents);
        }
        let k = sums.4 as f64;
        let validation = match monitor_loss(&params) {
            Ok(v) if v.is_finite() => v,
            Ok(v) => return Err(Error::Numeric(format!("validation loss {v} at epoch {epoch}"))),
            Err(e) => return Err(e),
        };
        history.push(EpochRecord {
            epoch,
            train: LossValue {
                survival_part: sums.0 / k,
                penalty_part: sums.1 / k,
                total: sums.2 / k,
                m: sums.3,
            },
            validation,
        });
        if validation < best_validation {
            best_validation = validation;
            best_epoch = epoch;
            best = params.clone();
        } else if epoch - best_epoch >= config.patience {
            info!("early stop at epoch {epoch}; best epoch {best_epoch}");
            break;
        }
    }
    Ok(FitResult {
        params: best,
        history,
        best_epoch,
        best_validation,
        kernel_resets,
        clamped_terms,
        skipped_batches,
    })
}

/// Held-out performance of one fitted model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestSummary {
    pub lambda: f64,
    /// Penalty-free survival loss on the test set; `penalty_part` is the
    /// fitted kernel's penalty at `lambda`.
    pub loss: LossValue,
    pub c_index: f64,
    pub gmse: Option<f64>,
    pub curvature: f64,
    pub best_epoch: usize,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub fit: FitResult,
    pub summary: TestSummary,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub plan: SplitPlan,
    pub rows: Vec<SweepRow>,
}

pub fn split_for(config: &TrainConfig, outcomes: &[SurvivalOutcome]) -> Result<SplitPlan> {
    stratified_split(
        outcomes,
        config.train_ratio,
        config.time_bins,
        derive_seed(config.seed, Stream::Split, 0),
    )
}

/// Test-set summary of fitted parameters.
pub fn summarize(
    params: &ParamSet,
    test: &Batch,
    strength: f64,
    truth: Option<&ContributionGrid>,
    best_epoch: usize,
) -> Result<TestSummary> {
    let field = cumulative_effect(params, &test.panel, EvalMode::Inference)?;
    let surv = crate::loss::efron_loss(&field, &test.masks)?;
    let kernel = LagKernel(params.kernel().to_vec());
    let penalty = smoothness_penalty(&kernel, strength);
    let c = c_index(&field, &test.outcomes)?;
    let gmse = truth
        .map(|t| crate::eval::model_grid(params, &t.x_grid, &t.l_grid).and_then(|p| crate::eval::gmse(t, &p)))
        .transpose()?;
    Ok(TestSummary {
        lambda: strength,
        loss: LossValue {
            survival_part: surv,
            penalty_part: penalty,
            total: surv + penalty,
            m: test.n_events(),
        },
        c_index: c,
        gmse,
        curvature: curvature(&kernel),
        best_epoch,
    })
}

/// One fit per smoothness strength on a shared train/test split.
pub fn smoothness_sweep(
    config: &TrainConfig,
    panel: &ExposurePanel,
    outcomes: &[SurvivalOutcome],
    truth: Option<&ContributionGrid>,
) -> Result<SweepResult> {
    config.validate()?;
    if config.lambdas.is_empty() {
        return Err(Error::Config("smoothness sweep needs at least one strength".into()));
    }
    let plan = split_for(config, outcomes)?;
    let data = Batch::new(panel.clone(), outcomes.to_vec())?;
    let train = data.select(&plan.train)?;
    let test = data.select(&plan.test)?;
    let mut rows = Vec::with_capacity(config.lambdas.len());
    for &lambda in &config.lambdas {
        let fit = fit(config, &train.panel, &train.outcomes, lambda)?;
        let summary = summarize(&fit.params, &test, lambda, truth, fit.best_epoch)?;
        info!(
            "lambda {lambda}: test loss {:.4}, c-index {:.4}",
            summary.loss.survival_part, summary.c_index
        );
        rows.push(SweepRow { fit, summary });
    }
    Ok(SweepResult { plan, rows })
}

/// Network and optimizer settings explored by [`cross_validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvSetting {
    pub net: NetConfig,
    pub learning_rate: f64,
}

#[derive(Debug, Clone)]
pub struct CvResult {
    pub best: usize,
    /// Mean validation survival loss per setting; infinite when every fold
    /// diverged.
    pub scores: Vec<f64>,
    pub skipped_folds: Vec<usize>,
}

/// K-fold selection of the setting with the lowest mean validation loss.
/// Smoothness is not part of the grid; every fit uses `lambda = 0`.
pub fn cross_validate(
    config: &TrainConfig,
    grid: &[CvSetting],
    panel: &ExposurePanel,
    outcomes: &[SurvivalOutcome],
) -> Result<CvResult> {
    config.validate()?;
    if grid.is_empty() {
        return Err(Error::Config("cross-validation grid is empty".into()));
    }
    let folds = stratified_folds(
        outcomes,
        config.folds,
        config.time_bins,
        derive_seed(config.seed, Stream::Fold, 0),
    )?;
    let data = Batch::new(panel.clone(), outcomes.to_vec())?;
    let mut parts = Vec::new();
    let mut skipped = Vec::new();
    for k in 0..config.folds {
        let (held, rest): (Vec<usize>, Vec<usize>) = (0..outcomes.len()).partition(|&i| folds[i] == k);
        let valid = data.select(&held)?;
        let train = data.select(&rest)?;
        if valid.n_events() == 0 || train.n_events() == 0 {
            warn!("fold {k} has no events on one side; skipped");
            skipped.push(k);
            continue;
        }
        parts.push((train, valid));
    }
    if parts.is_empty() {
        return Err(Error::Data("every cross-validation fold lacks events".into()));
    }
    let mut scores = Vec::with_capacity(grid.len());
    for (s, setting) in grid.iter().enumerate() {
        let cfg = TrainConfig {
            net: setting.net.clone(),
            learning_rate: setting.learning_rate,
            seed: derive_seed(config.seed, Stream::Fold, 1 + s as u64),
            ..config.clone()
        };
        let mut total = 0.0;
        for (train, valid) in &parts {
            let score = fit(&cfg, &train.panel, &train.outcomes, 0.0)
                .and_then(|f| survival_loss(&f.params, valid));
            match score {
                Ok(v) if v.is_finite() => total += v,
                Ok(_) | Err(Error::Numeric(_)) => {
                    warn!("setting {s} diverged");
                    total = f64::INFINITY;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        scores.push(total / parts.len() as f64);
    }
    let best = scores
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("nonempty grid");
    Ok(CvResult {
        best,
        scores,
        skipped_folds: skipped,
    })
}
