//! Total training loss of a batch and its analytic gradient with respect to
//! every trainable parameter.
//!
//! Only at-risk cells (`t <= time_i`) influence the partial likelihood, and
//! because the convolution is causal those cells only read exposures from
//! other at-risk cells, so the dense block is evaluated on that subset.

use ndarray::Array1;

use crate::dense::{self, Pass};
use crate::error::{Error, Result};
use crate::loss::{efron, smoothness_penalty, smoothness_penalty_grad, LossValue, RiskMasks, SurvivalOutcome};
use crate::model::{convolve_rows, EvalMode, ExposurePanel, HazardField, LagKernel, CHUNK};
use crate::params::ParamSet;
use crate::rng;

/// A batch of subjects with their masks prepared once.
#[derive(Debug, Clone)]
pub struct Batch {
    pub panel: ExposurePanel,
    pub outcomes: Vec<SurvivalOutcome>,
    pub masks: RiskMasks,
}

impl Batch {
    pub fn new(panel: ExposurePanel, outcomes: Vec<SurvivalOutcome>) -> Result<Self> {
        if panel.n_subjects() != outcomes.len() {
            return Err(Error::Shape(format!(
                "{} exposure rows but {} outcomes",
                panel.n_subjects(),
                outcomes.len()
            )));
        }
        let masks = crate::loss::build_masks(&outcomes, panel.horizon())?;
        Ok(Self { panel, outcomes, masks })
    }

    pub fn select(&self, subjects: &[usize]) -> Result<Self> {
        let outcomes = subjects.iter().map(|&i| self.outcomes[i]).collect();
        Self::new(self.panel.select(subjects), outcomes)
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn n_events(&self) -> usize {
        self.masks.total_events()
    }
}

pub struct Evaluation {
    pub loss: LossValue,
    pub grad: Vec<f64>,
    /// Batch statistics from a training pass with normalization layers.
    pub batch_stats: Vec<(Array1<f64>, Array1<f64>)>,
    pub clamped: usize,
}

/// Loss and gradient of `efron + penalty` for the batch.
pub fn loss_and_grad(params: &ParamSet, batch: &Batch, strength: f64, mode: EvalMode) -> Result<Evaluation> {
    if batch.n_events() == 0 {
        return Err(Error::NoEvents);
    }
    let horizon = batch.panel.horizon();
    let x = batch.panel.values();
    let active: Vec<usize> = batch
        .masks
        .risk_mask()
        .iter()
        .enumerate()
        .filter_map(|(i, &r)| r.then_some(i))
        .collect();
    let xs: Vec<f64> = active.iter().map(|&i| x[i]).collect();

    let mut forwards = Vec::new();
    let training = matches!(mode, EvalMode::Training { .. });
    match mode {
        EvalMode::Inference => {
            for chunk in xs.chunks(CHUNK) {
                forwards.push(dense::forward(params, chunk, Pass::Inference, true));
            }
        }
        EvalMode::Training { seed } => {
            let mut r = rng::seeded(seed);
            if params.config.batch_norm {
                forwards.push(dense::forward(params, &xs, Pass::Training { rng: &mut r }, true));
            } else {
                for chunk in xs.chunks(CHUNK) {
                    forwards.push(dense::forward(params, chunk, Pass::Training { rng: &mut r }, true));
                }
            }
        }
    }
    let zero = dense::forward(params, &[0.0], Pass::Inference, true);
    let g0 = zero.g[0];

    let mut f = vec![0.0; x.len()];
    let mut k = 0;
    for fw in &forwards {
        for &g in &fw.g {
            let idx = active[k];
            f[idx] = g - g0 + x[idx];
            k += 1;
        }
    }

    let kernel = LagKernel(params.kernel().to_vec());
    let h = HazardField::new(batch.panel.n_subjects(), horizon, convolve_rows(&kernel, &f, horizon))?;
    let surv = efron(&h, &batch.masks, true)?;
    let dh = surv.grad.expect("gradient requested");
    let penalty = smoothness_penalty(&kernel, strength);
    if !surv.value.is_finite() || !penalty.is_finite() {
        return Err(Error::Numeric(format!(
            "loss is not finite (survival {}, penalty {penalty})",
            surv.value
        )));
    }

    let layout = params.layout();
    let mut grad = vec![0.0; layout.n_params];
    let w = kernel.weights();
    let mut dw = vec![0.0; w.len()];
    let mut df = vec![0.0; x.len()];
    for (frow, (dhrow, dfrow)) in f
        .chunks(horizon)
        .zip(dh.chunks(horizon).zip(df.chunks_mut(horizon)))
    {
        for t in 0..horizon {
            let d = dhrow[t];
            if d == 0.0 {
                continue;
            }
            for (l, &wl) in w.iter().enumerate().take(t + 1) {
                dw[l] += d * frow[t - l];
                dfrow[t - l] += d * wl;
            }
        }
    }
    for (g, (a, b)) in grad[layout.kernel.range()]
        .iter_mut()
        .zip(dw.iter().zip(smoothness_penalty_grad(&kernel, strength)))
    {
        *g = a + b;
    }

    let dfa: Vec<f64> = active.iter().map(|&i| df[i]).collect();
    let mut start = 0;
    for fw in &forwards {
        let n = fw.g.len();
        dense::backward(params, fw, &dfa[start..start + n], training, &mut grad);
        start += n;
    }
    let dg0: f64 = -dfa.iter().sum::<f64>();
    dense::backward(params, &zero, &[dg0], false, &mut grad);

    let batch_stats = forwards.into_iter().flat_map(|f| f.batch_stats).collect();
    Ok(Evaluation {
        loss: LossValue {
            survival_part: surv.value,
            penalty_part: penalty,
            total: surv.value + penalty,
            m: surv.m,
        },
        grad,
        batch_stats,
        clamped: surv.clamped,
    })
}

/// Penalty-free survival loss on a batch, inference mode.
pub fn survival_loss(params: &ParamSet, batch: &Batch) -> Result<f64> {
    let h = crate::model::cumulative_effect(params, &batch.panel, EvalMode::Inference)?;
    crate::loss::efron_loss(&h, &batch.masks)
}
