use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lagsurv_cli::ingest;

fn lagsurv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lagsurv"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = lagsurv(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

const SMALL: &str = r#"
seed = 3
[simulate]
scenario = "S1"
n = 200
horizon = 20
[train]
learning_rate = 0.01
max_epochs = 30
lambdas = [0.0, 1.0, 5.0, 10.0]
[train.net]
hidden = [8, 8]
lag = 5
[bootstrap]
replicates = 3
[gradcheck]
n = 6
horizon = 8
"#;

fn setup(dir: &Path) -> String {
    let cfg = dir.join("run.toml");
    fs::write(&cfg, SMALL).unwrap();
    cfg.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_train_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path());
    let sim = tmp.path().join("sim");
    ok(&["simulate", "--config", &cfg, "--out", s(&sim)]);
    for f in ["exposures.csv", "outcomes.csv", "truth.csv", "manifest.json"] {
        assert!(sim.join(f).exists(), "{f}");
    }
    let manifest = json(&sim.join("manifest.json"));
    assert_eq!(manifest["facts"]["scenario"], "S1");
    assert_eq!(manifest["seed"], 3);

    let e = sim.join("exposures.csv");
    let o = sim.join("outcomes.csv");
    let t = sim.join("truth.csv");
    let fit = tmp.path().join("fit");
    ok(&["train", "--config", &cfg, "--out", s(&fit), "--exposures", s(&e), "--outcomes", s(&o), "--truth", s(&t)]);
    for f in ["model.json", "history.csv", "metrics.json", "manifest.json"] {
        assert!(fit.join(f).exists(), "{f}");
    }
    let metrics = json(&fit.join("metrics.json"));
    assert!(metrics["gmse"].is_number());
    let c = metrics["c_index"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&c));
    let inputs = &json(&fit.join("manifest.json"))["inputs"];
    assert_eq!(inputs["exposures"]["sha256"].as_str().unwrap().len(), 64);

    let model = fit.join("model.json");
    let ev = tmp.path().join("eval");
    ok(&["evaluate", "--config", &cfg, "--out", s(&ev), "--model", s(&model), "--exposures", s(&e), "--outcomes", s(&o), "--truth", s(&t)]);
    let m = json(&ev.join("metrics.json"));
    assert!(m["gmse"].is_number());
    assert_eq!(m["n_subjects"], 200);

    let surf = tmp.path().join("surface");
    ok(&["export-surface", "--out", s(&surf), "--model", s(&model)]);
    let grid = ingest::parse_grid(fs::File::open(surf.join("surface.csv")).unwrap()).unwrap();
    assert_eq!(grid.x_grid.len(), 101);
    assert_eq!(grid.l_grid, vec![0, 1, 2, 3, 4, 5]);
    assert!(grid.row(0).iter().all(|v| *v == 0.0));
    let slices = fs::read_to_string(surf.join("slices.csv")).unwrap();
    assert!(slices.starts_with("x,l0,l1,l2,l3,l4,l5\n"));
}

#[test]
fn sweep_and_bootstrap() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path());
    let sim = tmp.path().join("sim");
    ok(&["simulate", "--config", &cfg, "--out", s(&sim)]);
    let e = sim.join("exposures.csv");
    let o = sim.join("outcomes.csv");
    let sw = tmp.path().join("sweep");
    ok(&["sweep", "--config", &cfg, "--out", s(&sw), "--exposures", s(&e), "--outcomes", s(&o)]);
    let table = fs::read_to_string(sw.join("results.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
    assert!(sw.join("model_3.json").exists());

    let bs = tmp.path().join("boot");
    ok(&["bootstrap", "--config", &cfg, "--out", s(&bs), "--exposures", s(&e), "--outcomes", s(&o)]);
    let f = fs::read_to_string(bs.join("bands_f.csv")).unwrap();
    let mut lines = f.lines();
    assert_eq!(lines.next(), Some("grid,point,lo,hi"));
    let first: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(first, vec![0.0, 0.0, 0.0, 0.0]);
    assert_eq!(fs::read_to_string(bs.join("bands_w.csv")).unwrap().lines().count(), 7);
}

#[test]
fn reruns_are_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&["simulate", "--config", &cfg, "--out", s(&a)]);
    ok(&["simulate", "--config", &cfg, "--out", s(&b)]);
    for f in ["exposures.csv", "outcomes.csv", "truth.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
    let e = a.join("exposures.csv");
    let o = a.join("outcomes.csv");
    let (fa, fb) = (tmp.path().join("fa"), tmp.path().join("fb"));
    ok(&["train", "--config", &cfg, "--out", s(&fa), "--exposures", s(&e), "--outcomes", s(&o)]);
    ok(&["train", "--config", &cfg, "--out", s(&fb), "--exposures", s(&e), "--outcomes", s(&o)]);
    assert_eq!(
        json(&fa.join("manifest.json"))["outputs"],
        json(&fb.join("manifest.json"))["outputs"]
    );
}

#[test]
fn exported_dataset_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path());
    let sim = tmp.path().join("sim");
    ok(&["simulate", "--config", &cfg, "--out", s(&sim), "--seed", "11"]);
    let data = ingest::ingest(
        fs::File::open(sim.join("exposures.csv")).unwrap(),
        fs::File::open(sim.join("outcomes.csv")).unwrap(),
        false,
    )
    .unwrap();
    let ds = lagsurv::simulate_dataset(
        &lagsurv::SimConfig {
            n: 200,
            horizon: 20,
            ..Default::default()
        },
        11,
    )
    .unwrap();
    assert_eq!(data.panel, ds.panel);
    assert_eq!(data.outcomes, ds.outcomes);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(lagsurv(&["simulate", "--bogus"]).status.code(), Some(2));
    assert_eq!(lagsurv(&["frobnicate"]).status.code(), Some(2));

    let bad_cfg = tmp.path().join("bad.toml");
    fs::write(&bad_cfg, "[train]\nunknown_key = 1\n").unwrap();
    assert_eq!(lagsurv(&["simulate", "--config", s(&bad_cfg)]).status.code(), Some(2));

    let e = tmp.path().join("e.csv");
    let o = tmp.path().join("o.csv");
    fs::write(&e, "subject_id,t,exposure\na,1,0.5\na,1,0.7\n").unwrap();
    fs::write(&o, "subject_id,time,event\na,1,1\n").unwrap();
    let out = tmp.path().join("x");
    let res = lagsurv(&["train", "--out", s(&out), "--exposures", s(&e), "--outcomes", s(&o)]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("lines 2 and 3"));

    let missing = lagsurv(&["train", "--out", s(&out)]);
    assert_eq!(missing.status.code(), Some(2));

    let strict = tmp.path().join("strict.toml");
    fs::write(&strict, "[gradcheck]\ntolerance = 1e-300\nn = 4\nhorizon = 5\n").unwrap();
    let gc = lagsurv(&["grad-check", "--config", s(&strict), "--out", s(&tmp.path().join("gc"))]);
    assert_eq!(gc.status.code(), Some(4));
    assert!(tmp.path().join("gc/gradcheck.json").exists());
}

#[test]
fn grad_check_passes_by_default() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path());
    let out = tmp.path().join("gc");
    ok(&["grad-check", "--config", &cfg, "--out", s(&out)]);
    let report = json(&out.join("gradcheck.json"));
    assert!(report["max_rel_error"].as_f64().unwrap() < 1e-4);
}
