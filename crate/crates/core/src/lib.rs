//! Cumulative exposure modeling for time-dependent survival data.
//!
//! A scalar exposure network `f` (anchored so that `f(0) = 0`) feeds a
//! causal lag kernel `w` with unit Euclidean norm; their convolution is the
//! log-hazard `h(X, t) = sum_l f(x[t - l]) w[l]` of a Cox model fitted by the
//! Efron partial likelihood.
//!
//! ```
//! use lagsurv::{init_params, cumulative_effect, EvalMode, ExposurePanel, NetConfig};
//!
//! let params = init_params(&NetConfig::new(vec![8, 8], 3), 42).unwrap();
//! let panel = ExposurePanel::new(1, 4, vec![0.0, 0.5, 1.0, 0.2]).unwrap();
//! let h = cumulative_effect(&params, &panel, EvalMode::Inference).unwrap();
//! assert_eq!(h.row(0).len(), 4);
//! ```

pub mod error;
pub mod rng;
pub mod params;
mod dense;
pub mod model;
pub mod loss;
pub mod objective;
pub mod gradcheck;
pub mod optim;
pub mod split;
pub mod train;
pub mod bootstrap;
pub mod sim;
pub mod eval;

pub use error::{Error, Result};
pub use gradcheck::{grad_check, GradReport};
pub use loss::{build_masks, efron_loss, smoothness_penalty, total_loss, LossValue, RiskMasks, SurvivalOutcome};
pub use model::{cumulative_effect, exposure_forward, lag_convolve, project_kernel, EvalMode, ExposurePanel, HazardField, LagKernel};
pub use objective::Batch;
pub use params::{init_params, NetConfig, ParamSet};
pub use eval::{c_index, evaluate, gmse, ContributionGrid, Metrics};
pub use sim::{scenario_functions, simulate_dataset, Scenario, ScenarioId, SimConfig, SimulatedDataset};
pub use split::{stratified_split, SplitPlan};
pub use train::{cross_validate, fit, smoothness_sweep, BatchSize, FitResult, TrainConfig};
pub use bootstrap::{bootstrap_bands, CiBands};
