//! Subcommand implementations.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use lagsurv::bootstrap::{bootstrap_bands, Band, BootstrapInput};
use lagsurv::eval::{default_x_grid, lag_grid, model_grid, scenario_grid};
use lagsurv::objective::Batch;
use lagsurv::train::{split_for, summarize, EpochRecord};
use lagsurv::{
    evaluate, fit, grad_check, init_params, simulate_dataset, smoothness_sweep, ContributionGrid, ParamSet, SimConfig,
};
use log::info;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::ingest::{self, fmt_num, Ingested};
use crate::manifest::{Manifest, Run};

#[derive(Debug, Parser)]
#[command(name = "lagsurv", version, about = "Exposure-lag survival models: simulate, fit, evaluate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `output_dir`.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Run seed, overriding `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct DataArgs {
    /// Long-format exposure CSV (subject_id,t,exposure).
    #[arg(long)]
    pub exposures: Option<PathBuf>,
    /// Outcome CSV (subject_id,time,event).
    #[arg(long)]
    pub outcomes: Option<PathBuf>,
    /// Truth grid CSV (x,l,value) for GMSE.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with its truth grid.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Fit one model on the train split and score it on the test split.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Smoothness strength, overriding the first `train.lambdas` entry.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Fit one model per smoothness strength on a shared split.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Score a fitted model on a dataset.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Model document written by train, sweep or bootstrap.
        #[arg(long)]
        model: PathBuf,
    },
    /// Percentile bands for f and w from resample-and-refit replicates.
    Bootstrap {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Number of replicates, overriding `bootstrap.replicates`.
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Write the exposure-lag contribution surface of a model.
    ExportSurface {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
    /// Compare analytic and finite-difference gradients on a synthetic batch.
    GradCheck {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn apply_data(cfg: &mut RunConfig, data: &DataArgs) {
    if let Some(p) = &data.exposures {
        cfg.data.exposures = Some(p.clone());
    }
    if let Some(p) = &data.outcomes {
        cfg.data.outcomes = Some(p.clone());
    }
    if let Some(p) = &data.truth {
        cfg.data.truth = Some(p.clone());
    }
}

fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| CliError::Usage(format!("{what} file not given (flag or [data] section)")))
}

fn load_data(run: &mut Run, cfg: &RunConfig) -> Result<Ingested> {
    let e = run.read_input("exposures", required(&cfg.data.exposures, "exposure")?)?;
    let o = run.read_input("outcomes", required(&cfg.data.outcomes, "outcome")?)?;
    let data = ingest::ingest(e.as_slice(), o.as_slice(), cfg.data.normalize)?;
    run.fact("exposure_scale", data.scale);
    run.fact("subjects", data.panel.n_subjects());
    run.fact("horizon", data.panel.horizon());
    if !data.warnings.is_empty() {
        run.fact("ingest_warnings", &data.warnings);
    }
    Ok(data)
}

fn load_truth(run: &mut Run, cfg: &RunConfig) -> Result<Option<ContributionGrid>> {
    match &cfg.data.truth {
        Some(path) => {
            let bytes = run.read_input("truth", path)?;
            Ok(Some(ingest::parse_grid(bytes.as_slice())?))
        }
        None => Ok(None),
    }
}

fn load_model(run: &mut Run, path: &Path) -> Result<ParamSet> {
    let bytes = run.read_input("model", path)?;
    let text = String::from_utf8(bytes)
        .map_err(|_| lagsurv::Error::Parse { line: 0, msg: "model document is not UTF-8".into() })?;
    Ok(ParamSet::from_json(&text)?)
}

fn model_text(p: &ParamSet) -> String {
    let mut s = p.to_json();
    s.push('\n');
    s
}

/// Flat `key,value` rows rendered as a JSON object with sorted keys.
fn flat_metrics(pairs: Vec<(&str, serde_json::Value)>) -> serde_json::Map<String, serde_json::Value> {
    let mut m: Vec<_> = pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    m.sort_by(|a, b| a.0.cmp(&b.0));
    m.into_iter().collect()
}

fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_survival,train_penalty,train_total,validation\n");
    for h in history {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            h.epoch,
            fmt_num(h.train.survival_part),
            fmt_num(h.train.penalty_part),
            fmt_num(h.train.total),
            fmt_num(h.validation)
        ));
    }
    s
}

fn bands_csv(bands: &[Band]) -> String {
    let mut s = String::from("grid,point,lo,hi\n");
    for b in bands {
        s.push_str(&format!(
            "{},{},{},{}\n",
            fmt_num(b.grid),
            fmt_num(b.point),
            fmt_num(b.lo),
            fmt_num(b.hi)
        ));
    }
    s
}

fn slices_csv(grid: &ContributionGrid) -> String {
    let mut s = String::from("x");
    for l in &grid.l_grid {
        s.push_str(&format!(",l{l}"));
    }
    s.push('\n');
    for (ix, x) in grid.x_grid.iter().enumerate() {
        s.push_str(&fmt_num(*x));
        for v in grid.row(ix) {
            s.push(',');
            s.push_str(&fmt_num(*v));
        }
        s.push('\n');
    }
    s
}

fn opt_num(v: Option<f64>) -> serde_json::Value {
    v.map_or(serde_json::Value::Null, serde_json::Value::from)
}

pub fn run(cli: Cli) -> Result<Manifest> {
    match cli.command {
        Command::Simulate { common } => simulate(&load_config(&common)?),
        Command::Train { common, data, lambda } => {
            let mut cfg = load_config(&common)?;
            apply_data(&mut cfg, &data);
            if let Some(l) = lambda {
                cfg.train.lambdas = vec![l];
            }
            cfg.validate()?;
            train(&cfg)
        }
        Command::Sweep { common, data } => {
            let mut cfg = load_config(&common)?;
            apply_data(&mut cfg, &data);
            sweep(&cfg)
        }
        Command::Evaluate { common, data, model } => {
            let mut cfg = load_config(&common)?;
            apply_data(&mut cfg, &data);
            evaluate_cmd(&cfg, &model)
        }
        Command::Bootstrap {
            common,
            data,
            replicates,
        } => {
            let mut cfg = load_config(&common)?;
            apply_data(&mut cfg, &data);
            if let Some(b) = replicates {
                cfg.bootstrap.replicates = b;
            }
            cfg.validate()?;
            bootstrap(&cfg)
        }
        Command::ExportSurface { common, model } => export_surface(&load_config(&common)?, &model),
        Command::GradCheck { common } => grad_check_cmd(&load_config(&common)?),
    }
}

pub fn simulate(cfg: &RunConfig) -> Result<Manifest> {
    let mut run = Run::new("simulate", cfg, &cfg.output_dir)?;
    let ds = simulate_dataset(&cfg.simulate, cfg.seed)?;
    let ids: Vec<String> = (1..=ds.outcomes.len()).map(|i| format!("s{i}")).collect();
    run.write_with("exposures.csv", |w| ingest::write_exposures(w, &ids, &ds.panel))?;
    run.write_with("outcomes.csv", |w| ingest::write_outcomes(w, &ids, &ds.outcomes))?;
    let truth = scenario_grid(&ds.scenario, &default_x_grid(), &lag_grid(ds.scenario.lag))?;
    run.write_with("truth.csv", |w| ingest::write_grid(w, &truth))?;
    run.fact("scenario", ds.scenario.id.to_string());
    run.fact("amplitude", ds.scenario.amplitude);
    run.fact("events", ds.outcomes.iter().filter(|o| o.event).count());
    info!("simulated {} subjects over {} days", ds.outcomes.len(), ds.panel.horizon());
    run.finish()
}

pub fn train(cfg: &RunConfig) -> Result<Manifest> {
    let mut run = Run::new("train", cfg, &cfg.output_dir)?;
    let data = load_data(&mut run, cfg)?;
    let truth = load_truth(&mut run, cfg)?;
    let lambda = cfg.lambda();
    let plan = split_for(&cfg.train, &data.outcomes)?;
    let all = Batch::new(data.panel, data.outcomes)?;
    let train = all.select(&plan.train)?;
    let test = all.select(&plan.test)?;
    let fitted = fit(&cfg.train, &train.panel, &train.outcomes, lambda)?;
    let s = summarize(&fitted.params, &test, lambda, truth.as_ref(), fitted.best_epoch)?;
    run.write("model.json", model_text(&fitted.params).as_bytes())?;
    run.write("history.csv", history_csv(&fitted.history).as_bytes())?;
    let metrics = flat_metrics(vec![
        ("lambda", lambda.into()),
        ("test_loss", s.loss.survival_part.into()),
        ("test_penalty", s.loss.penalty_part.into()),
        ("test_events", s.loss.m.into()),
        ("c_index", s.c_index.into()),
        ("gmse", opt_num(s.gmse)),
        ("curvature", s.curvature.into()),
        ("best_epoch", s.best_epoch.into()),
        ("epochs_run", fitted.history.len().into()),
        ("best_validation", fitted.best_validation.into()),
        ("n_train", plan.train.len().into()),
        ("n_test", plan.test.len().into()),
        ("kernel_resets", fitted.kernel_resets.into()),
        ("clamped_terms", fitted.clamped_terms.into()),
    ]);
    run.write_json("metrics.json", &metrics)?;
    if !plan.warnings.is_empty() {
        run.fact("split_warnings", &plan.warnings);
    }
    run.finish()
}

pub fn sweep(cfg: &RunConfig) -> Result<Manifest> {
    let mut run = Run::new("sweep", cfg, &cfg.output_dir)?;
    let data = load_data(&mut run, cfg)?;
    let truth = load_truth(&mut run, cfg)?;
    let res = smoothness_sweep(&cfg.train, &data.panel, &data.outcomes, truth.as_ref())?;
    let mut table = String::from("lambda,model,test_loss,c_index,gmse,curvature,best_epoch\n");
    for (k, row) in res.rows.iter().enumerate() {
        let name = format!("model_{k}.json");
        run.write(&name, model_text(&row.fit.params).as_bytes())?;
        let s = &row.summary;
        table.push_str(&format!(
            "{},{name},{},{},{},{},{}\n",
            fmt_num(s.lambda),
            fmt_num(s.loss.survival_part),
            fmt_num(s.c_index),
            s.gmse.map(fmt_num).unwrap_or_default(),
            fmt_num(s.curvature),
            s.best_epoch
        ));
    }
    run.write("results.csv", table.as_bytes())?;
    run.finish()
}

pub fn evaluate_cmd(cfg: &RunConfig, model: &Path) -> Result<Manifest> {
    let mut run = Run::new("evaluate", cfg, &cfg.output_dir)?;
    let params = load_model(&mut run, model)?;
    let data = load_data(&mut run, cfg)?;
    let truth = load_truth(&mut run, cfg)?;
    let m = evaluate(&params, &data.panel, &data.outcomes, truth.as_ref())?;
    let metrics = flat_metrics(vec![
        ("loss", m.loss.into()),
        ("c_index", m.c_index.into()),
        ("gmse", opt_num(m.gmse)),
        ("n_subjects", m.n_subjects.into()),
        ("n_events", m.n_events.into()),
    ]);
    run.write_json("metrics.json", &metrics)?;
    run.finish()
}

pub fn bootstrap(cfg: &RunConfig) -> Result<Manifest> {
    let mut run = Run::new("bootstrap", cfg, &cfg.output_dir)?;
    let data = load_data(&mut run, cfg)?;
    let x = default_x_grid();
    let l = lag_grid(cfg.train.net.lag);
    let input = BootstrapInput {
        config: &cfg.train,
        panel: &data.panel,
        outcomes: &data.outcomes,
        strength: cfg.bootstrap.lambda.unwrap_or_else(|| cfg.lambda()),
        x_grid: &x,
        l_grid: &l,
    };
    let (point, bands) = bootstrap_bands(&input, cfg.bootstrap.replicates)?;
    run.write("model.json", model_text(&point).as_bytes())?;
    run.write("bands_f.csv", bands_csv(&bands.f).as_bytes())?;
    run.write("bands_w.csv", bands_csv(&bands.w).as_bytes())?;
    run.fact("replicates", bands.replicates);
    run.fact("failed_replicates", &bands.failed);
    run.finish()
}

pub fn export_surface(cfg: &RunConfig, model: &Path) -> Result<Manifest> {
    let mut run = Run::new("export-surface", cfg, &cfg.output_dir)?;
    let params = load_model(&mut run, model)?;
    let grid = model_grid(&params, &default_x_grid(), &lag_grid(params.config.lag))?;
    run.write_with("surface.csv", |w| ingest::write_grid(w, &grid))?;
    run.write("slices.csv", slices_csv(&grid).as_bytes())?;
    run.finish()
}

pub fn grad_check_cmd(cfg: &RunConfig) -> Result<Manifest> {
    let mut run = Run::new("grad-check", cfg, &cfg.output_dir)?;
    let gc = &cfg.gradcheck;
    let sim = SimConfig {
        n: gc.n,
        horizon: gc.horizon,
        ..cfg.simulate.clone()
    };
    let ds = simulate_dataset(&sim, cfg.seed)?;
    let params = init_params(&cfg.train.net, cfg.seed)?;
    let batch = Batch::new(ds.panel, ds.outcomes)?;
    let report = grad_check(&params, &batch, gc.strength, gc.step)?;
    run.write_json("gradcheck.json", &report)?;
    let worst = report.max_rel_error;
    run.fact("max_rel_error", worst);
    run.fact("passed", worst < gc.tolerance);
    let manifest = run.finish()?;
    if worst.is_nan() || worst >= gc.tolerance {
        let who = report.worst().map(|e| e.name.clone()).unwrap_or_default();
        return Err(CliError::Tolerance(format!(
            "max relative error {worst:.3e} at {who} exceeds {:.1e}",
            gc.tolerance
        )));
    }
    Ok(manifest)
}
