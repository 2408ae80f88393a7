//! Parameter registry for the exposure network and lag kernel.
//!
//! All trainable values live in one flat vector; [`Layout`] maps stable
//! names (`dense.0.weight`, `kernel`, ...) to offsets and shapes so that the
//! optimizer, the gradient checker and persistence all see the same view.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

pub const FORMAT_VERSION: u32 = 1;

/// Upper bound on trainable parameters accepted from configuration.
pub const MAX_PARAMS: usize = 1 << 26;

fn default_hidden() -> Vec<usize> {
    vec![32, 32]
}

fn default_lag() -> usize {
    20
}

/// Shape of the exposure network and the lag window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    /// Hidden layer widths of the dense block, input to output.
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    /// Maximum delay `L`; the kernel has `L + 1` taps.
    #[serde(default = "default_lag")]
    pub lag: usize,
    /// Dropout rate applied after each hidden activation in training mode.
    #[serde(default)]
    pub dropout: f64,
    /// Batch normalization between each hidden linear map and its activation.
    #[serde(default)]
    pub batch_norm: bool,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            hidden: default_hidden(),
            lag: default_lag(),
            dropout: 0.0,
            batch_norm: false,
        }
    }
}

impl NetConfig {
    pub fn new(hidden: Vec<usize>, lag: usize) -> Self {
        Self {
            hidden,
            lag,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(k) = self.hidden.iter().position(|&w| w == 0) {
            return Err(Error::Config(format!("hidden layer {k} has zero width")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout
            )));
        }
        match self.param_count() {
            Some(n) if n <= MAX_PARAMS => Ok(()),
            _ => Err(Error::Config(format!(
                "network with hidden {:?} and lag {} exceeds {MAX_PARAMS} parameters",
                self.hidden, self.lag
            ))),
        }
    }

    fn param_count(&self) -> Option<usize> {
        let mut fan: usize = 1;
        let mut n: usize = 0;
        let per_unit = if self.batch_norm { 3 } else { 1 };
        for &w in &self.hidden {
            n = n.checked_add(w.checked_mul(fan.checked_add(per_unit)?)?)?;
            fan = w;
        }
        n.checked_add(fan)?.checked_add(1)?.checked_add(self.lag.checked_add(1)?)
    }

    pub fn kernel_len(&self) -> usize {
        self.lag + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Slot {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenSlots {
    pub fan_in: usize,
    pub width: usize,
    pub weight: Slot,
    pub bias: Slot,
    pub gamma: Option<Slot>,
    pub beta: Option<Slot>,
    pub running_mean: Option<Slot>,
    pub running_var: Option<Slot>,
}

/// Offsets of every named array for a given [`NetConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub hidden: Vec<HiddenSlots>,
    pub out_weight: Slot,
    pub out_bias: Slot,
    pub kernel: Slot,
    pub n_params: usize,
    pub n_stats: usize,
}

impl Layout {
    pub fn new(cfg: &NetConfig) -> Self {
        let mut off = 0usize;
        let mut soff = 0usize;
        let take = |name: String, shape: Vec<usize>, off: &mut usize| {
            let s = Slot {
                name,
                offset: *off,
                shape,
            };
            *off += s.len();
            s
        };
        let mut hidden = Vec::with_capacity(cfg.hidden.len());
        let mut fan_in = 1;
        for (k, &width) in cfg.hidden.iter().enumerate() {
            let weight = take(format!("dense.{k}.weight"), vec![width, fan_in], &mut off);
            let bias = take(format!("dense.{k}.bias"), vec![width], &mut off);
            let (gamma, beta, running_mean, running_var) = if cfg.batch_norm {
                (
                    Some(take(format!("norm.{k}.gamma"), vec![width], &mut off)),
                    Some(take(format!("norm.{k}.beta"), vec![width], &mut off)),
                    Some(take(format!("norm.{k}.running_mean"), vec![width], &mut soff)),
                    Some(take(format!("norm.{k}.running_var"), vec![width], &mut soff)),
                )
            } else {
                (None, None, None, None)
            };
            hidden.push(HiddenSlots {
                fan_in,
                width,
                weight,
                bias,
                gamma,
                beta,
                running_mean,
                running_var,
            });
            fan_in = width;
        }
        let out_weight = take("dense.out.weight".into(), vec![1, fan_in], &mut off);
        let out_bias = take("dense.out.bias".into(), vec![1], &mut off);
        let kernel = take("kernel".into(), vec![cfg.kernel_len()], &mut off);
        Self {
            hidden,
            out_weight,
            out_bias,
            kernel,
            n_params: off,
            n_stats: soff,
        }
    }

    /// Trainable slots in storage order.
    pub fn param_slots(&self) -> Vec<&Slot> {
        let mut v = Vec::new();
        for h in &self.hidden {
            v.push(&h.weight);
            v.push(&h.bias);
            if let (Some(g), Some(b)) = (&h.gamma, &h.beta) {
                v.push(g);
                v.push(b);
            }
        }
        v.push(&self.out_weight);
        v.push(&self.out_bias);
        v.push(&self.kernel);
        v
    }

    pub fn stat_slots(&self) -> Vec<&Slot> {
        let mut v = Vec::new();
        for h in &self.hidden {
            if let (Some(m), Some(s)) = (&h.running_mean, &h.running_var) {
                v.push(m);
                v.push(s);
            }
        }
        v
    }
}

/// Every trainable parameter plus normalization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub config: NetConfig,
    pub seed: u64,
    pub values: Vec<f64>,
    pub stats: Vec<f64>,
    layout: Layout,
}

impl ParamSet {
    /// Builds a parameter set from raw arrays, checking their lengths.
    pub fn from_parts(config: NetConfig, seed: u64, values: Vec<f64>, stats: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if values.len() != layout.n_params || stats.len() != layout.n_stats {
            return Err(Error::Shape(format!(
                "expected {} parameters and {} statistics, got {} and {}",
                layout.n_params,
                layout.n_stats,
                values.len(),
                stats.len()
            )));
        }
        Ok(Self {
            config,
            seed,
            values,
            stats,
            layout,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn kernel(&self) -> &[f64] {
        &self.values[self.layout.kernel.range()]
    }

    pub fn kernel_mut(&mut self) -> &mut [f64] {
        let r = self.layout.kernel.range();
        &mut self.values[r]
    }

    pub fn slot(&self, slot: &Slot) -> &[f64] {
        &self.values[slot.range()]
    }

    /// Named views of every trainable array, storage order.
    pub fn named(&self) -> Vec<(&str, &[f64])> {
        self.layout
            .param_slots()
            .into_iter()
            .map(|s| (s.name.as_str(), &self.values[s.range()]))
            .collect()
    }

    /// Zeroes every dense weight and bias (the kernel is untouched), which
    /// makes the exposure function the identity.
    pub fn zero_dense(&mut self) {
        let kernel = self.layout.kernel.range();
        let norm: Vec<std::ops::Range<usize>> = self
            .layout
            .hidden
            .iter()
            .flat_map(|h| [h.gamma.clone(), h.beta.clone()])
            .flatten()
            .map(|s| s.range())
            .collect();
        for (i, v) in self.values.iter_mut().enumerate() {
            if !kernel.contains(&i) && !norm.iter().any(|r| r.contains(&i)) {
                *v = 0.0;
            }
        }
    }

    pub fn to_document(&self) -> ModelDocument {
        let arrays = |slots: Vec<&Slot>, src: &[f64]| {
            slots
                .into_iter()
                .map(|s| NamedArray {
                    name: s.name.clone(),
                    shape: s.shape.clone(),
                    values: src[s.range()].to_vec(),
                })
                .collect()
        };
        ModelDocument {
            format_version: FORMAT_VERSION,
            seed: self.seed,
            net_config: self.config.clone(),
            params: arrays(self.layout.param_slots(), &self.values),
            stats: arrays(self.layout.stat_slots(), &self.stats),
        }
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported model format version {}",
                doc.format_version
            )));
        }
        doc.net_config.validate()?;
        let layout = Layout::new(&doc.net_config);
        let gather = |slots: Vec<&Slot>, arrays: &[NamedArray], total: usize| -> Result<Vec<f64>> {
            if slots.len() != arrays.len() {
                return Err(Error::Data(format!(
                    "expected {} named arrays, found {}",
                    slots.len(),
                    arrays.len()
                )));
            }
            for (slot, arr) in slots.iter().zip(arrays) {
                if slot.name != arr.name {
                    return Err(Error::Data(format!(
                        "expected array '{}', found '{}'",
                        slot.name, arr.name
                    )));
                }
                if slot.shape != arr.shape || arr.values.len() != slot.len() {
                    return Err(Error::Data(format!(
                        "array '{}' has shape {:?} with {} values, expected {:?}",
                        arr.name,
                        arr.shape,
                        arr.values.len(),
                        slot.shape
                    )));
                }
                if arr.values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Data(format!("array '{}' holds non-finite values", arr.name)));
                }
            }
            let mut out = vec![0.0; total];
            for (slot, arr) in slots.into_iter().zip(arrays) {
                out[slot.range()].copy_from_slice(&arr.values);
            }
            Ok(out)
        };
        let values = gather(layout.param_slots(), &doc.params, layout.n_params)?;
        let stats = gather(layout.stat_slots(), &doc.stats, layout.n_stats)?;
        Ok(Self {
            config: doc.net_config.clone(),
            seed: doc.seed,
            values,
            stats,
            layout,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("model document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line() as u64,
            msg: e.to_string(),
        })?;
        Self::from_document(&doc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Persisted form of a [`ParamSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub format_version: u32,
    pub seed: u64,
    pub net_config: NetConfig,
    pub params: Vec<NamedArray>,
    pub stats: Vec<NamedArray>,
}

/// Normalized uniform vector of length `len`.
pub fn uniform_kernel(len: usize) -> Vec<f64> {
    vec![1.0 / (len as f64).sqrt(); len]
}

/// Fan-in scaled uniform initialization, `U(-sqrt(3/fan_in), sqrt(3/fan_in))`,
/// zero biases, unit norm gains and a normalized uniform lag kernel.
pub fn init_params(config: &NetConfig, seed: u64) -> Result<ParamSet> {
    config.validate()?;
    let layout = Layout::new(config);
    let mut values = vec![0.0; layout.n_params];
    let mut stats = vec![0.0; layout.n_stats];
    let mut rng = rng::seeded(rng::derive_seed(seed, Stream::Init, 0));

    let mut fill = |slot: &Slot, fan_in: usize, values: &mut [f64]| {
        let a = (3.0 / fan_in as f64).sqrt();
        for v in &mut values[slot.range()] {
            *v = rng.random_range(-a..=a);
        }
    };
    for h in &layout.hidden {
        fill(&h.weight, h.fan_in, &mut values);
        if let Some(g) = &h.gamma {
            values[g.range()].fill(1.0);
        }
        if let Some(v) = &h.running_var {
            stats[v.range()].fill(1.0);
        }
    }
    fill(&layout.out_weight, layout.out_weight.shape[1], &mut values);
    values[layout.kernel.range()].copy_from_slice(&uniform_kernel(config.kernel_len()));

    Ok(ParamSet {
        config: config.clone(),
        seed,
        values,
        stats,
        layout,
    })
}
