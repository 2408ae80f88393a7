//! The forward model: anchored exposure function, causal lag convolution and
//! the composed cumulative log-hazard.

use log::warn;

use crate::dense::{self, Pass};
use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::rng;

/// Cells evaluated per dense-block pass when no batch statistics are needed.
pub(crate) const CHUNK: usize = 8192;

/// Evaluation regime of the dense block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Dropout off, normalization from accumulated statistics. Deterministic.
    Inference,
    /// Dropout masks drawn from `seed`, normalization from batch statistics.
    Training { seed: u64 },
}

/// Rectangular exposure histories, `values[i * horizon + (t - 1)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposurePanel {
    n_subjects: usize,
    horizon: usize,
    values: Vec<f64>,
}

impl ExposurePanel {
    pub fn new(n_subjects: usize, horizon: usize, values: Vec<f64>) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Shape("horizon must be at least 1".into()));
        }
        if values.len() != n_subjects * horizon {
            return Err(Error::Shape(format!(
                "{} values for {n_subjects} subjects x {horizon} times",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!(
                "non-finite exposure for subject {} at t={}",
                pos / horizon,
                pos % horizon + 1
            )));
        }
        Ok(Self {
            n_subjects,
            horizon,
            values,
        })
    }

    pub fn zeros(n_subjects: usize, horizon: usize) -> Self {
        Self {
            n_subjects,
            horizon,
            values: vec![0.0; n_subjects * horizon],
        }
    }

    pub fn n_subjects(&self) -> usize {
        self.n_subjects
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.horizon..(i + 1) * self.horizon]
    }

    /// Exposure of subject `i` at 1-based time `t`.
    pub fn get(&self, i: usize, t: usize) -> f64 {
        self.values[i * self.horizon + t - 1]
    }

    /// Rows of the given subjects, in order; indices may repeat.
    pub fn select(&self, subjects: &[usize]) -> Self {
        let mut values = Vec::with_capacity(subjects.len() * self.horizon);
        for &i in subjects {
            values.extend_from_slice(self.row(i));
        }
        Self {
            n_subjects: subjects.len(),
            horizon: self.horizon,
            values,
        }
    }
}

/// Lag weights `w[0..=L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagKernel(pub Vec<f64>);

impl LagKernel {
    pub fn lag(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|w| w * w).sum::<f64>().sqrt()
    }
}

/// Log-hazard per subject and time, same layout as [`ExposurePanel`].
#[derive(Debug, Clone, PartialEq)]
pub struct HazardField {
    n_subjects: usize,
    horizon: usize,
    values: Vec<f64>,
}

impl HazardField {
    pub fn new(n_subjects: usize, horizon: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_subjects * horizon {
            return Err(Error::Shape(format!(
                "{} values for {n_subjects} subjects x {horizon} times",
                values.len()
            )));
        }
        Ok(Self {
            n_subjects,
            horizon,
            values,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.n_subjects
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.horizon..(i + 1) * self.horizon]
    }

    pub fn get(&self, i: usize, t: usize) -> f64 {
        self.values[i * self.horizon + t - 1]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn select(&self, subjects: &[usize]) -> Self {
        let mut values = Vec::with_capacity(subjects.len() * self.horizon);
        for &i in subjects {
            values.extend_from_slice(self.row(i));
        }
        Self {
            n_subjects: subjects.len(),
            horizon: self.horizon,
            values,
        }
    }
}

fn check_inputs(x: &[f64]) -> Result<()> {
    if let Some(v) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::Input(format!("non-finite exposure value {v}")));
    }
    let outside = x.iter().filter(|v| !(0.0..=1.0).contains(*v)).count();
    if outside > 0 {
        warn!("{outside} exposure values outside [0, 1]; the exposure function is extrapolating");
    }
    Ok(())
}

/// `g(0)` with inference-mode semantics.
pub(crate) fn g_at_zero(params: &ParamSet) -> f64 {
    dense::forward(params, &[0.0], Pass::Inference, false).g[0]
}

/// Raw dense-block output on `x`, chunked in inference mode.
pub(crate) fn g_values(params: &ParamSet, x: &[f64], mode: EvalMode) -> Vec<f64> {
    match mode {
        EvalMode::Inference => {
            let mut out = Vec::with_capacity(x.len());
            for chunk in x.chunks(CHUNK) {
                out.extend(dense::forward(params, chunk, Pass::Inference, false).g);
            }
            out
        }
        EvalMode::Training { seed } => {
            let mut r = rng::seeded(seed);
            dense::forward(params, x, Pass::Training { rng: &mut r }, false).g
        }
    }
}

/// `f(x) = g(x) - g(0) + x` elementwise, with `g(0)` always taken in
/// inference mode so that `f(0) = 0` holds exactly there.
pub fn exposure_forward(params: &ParamSet, x: &[f64], mode: EvalMode) -> Result<Vec<f64>> {
    check_inputs(x)?;
    let g0 = g_at_zero(params);
    Ok(g_values(params, x, mode)
        .into_iter()
        .zip(x)
        .map(|(g, &x)| g - g0 + x)
        .collect())
}

/// Causal convolution `out[t] = sum_l w[l] * series[t - l]` with zero
/// padding before the first time index.
pub fn lag_convolve(kernel: &LagKernel, series: &[f64]) -> Vec<f64> {
    let w = kernel.weights();
    (0..series.len())
        .map(|t| {
            w.iter()
                .take(t + 1)
                .enumerate()
                .map(|(l, &wl)| wl * series[t - l])
                .sum()
        })
        .collect()
}

/// Row-wise [`lag_convolve`] over a row-major `rows x horizon` buffer.
pub(crate) fn convolve_rows(kernel: &LagKernel, values: &[f64], horizon: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    for row in values.chunks(horizon) {
        out.extend(lag_convolve(kernel, row));
    }
    out
}

/// The cumulative log-hazard field `h[i][t] = sum_l f(x[i][t-l]) w[l]`.
pub fn cumulative_effect(params: &ParamSet, panel: &ExposurePanel, mode: EvalMode) -> Result<HazardField> {
    let f = exposure_forward(params, panel.values(), mode)?;
    let kernel = LagKernel(params.kernel().to_vec());
    let h = convolve_rows(&kernel, &f, panel.horizon());
    HazardField::new(panel.n_subjects(), panel.horizon(), h)
}

/// Rescales the kernel to unit Euclidean norm.
pub fn project_kernel(kernel: &LagKernel) -> Result<LagKernel> {
    let norm = kernel.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::DegenerateKernel);
    }
    Ok(LagKernel(kernel.0.iter().map(|w| w / norm).collect()))
}
