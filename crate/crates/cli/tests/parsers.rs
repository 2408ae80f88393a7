use std::fs;
use std::path::PathBuf;

use lagsurv::ParamSet;
use lagsurv_cli::ingest::{ingest, parse_exposures, parse_grid, parse_outcomes};
use lagsurv_cli::RunConfig;
use proptest::prelude::*;

fn corpus(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files.into_iter().map(|p| (p.clone(), fs::read(p).unwrap())).collect()
}

#[test]
fn corpus_seeds_parse() {
    for (path, bytes) in corpus("exposures_csv") {
        let res = parse_exposures(bytes.as_slice());
        assert!(res.is_ok(), "{}: {res:?}", path.display());
    }
    for (path, bytes) in corpus("outcomes_csv") {
        assert!(parse_outcomes(bytes.as_slice()).is_ok(), "{}", path.display());
    }
    for (path, bytes) in corpus("ingest_pair") {
        let k = bytes.iter().position(|&b| b == 0).unwrap();
        let d = ingest(&bytes[..k], &bytes[k + 1..], true).unwrap();
        assert!(!d.warnings.is_empty(), "{}", path.display());
    }
    for (path, bytes) in corpus("grid_csv") {
        assert!(parse_grid(bytes.as_slice()).is_ok(), "{}", path.display());
    }
    for (path, bytes) in corpus("run_config") {
        let text = String::from_utf8(bytes).unwrap();
        assert!(RunConfig::from_toml(&text).is_ok(), "{}", path.display());
    }
    for (path, bytes) in corpus("model_document") {
        let text = String::from_utf8(bytes).unwrap();
        assert!(ParamSet::from_json(&text).is_ok(), "{}", path.display());
    }
}

fn csvish() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop::sample::select(vec!["a", "b", ",", "\n", "1", "0", "-3", "1e9", "NaN", "inf", "\"", " ", "0.5", "99999999999999999999"]),
        0..40,
    )
    .prop_map(|parts| parts.concat())
}

proptest! {
    #[test]
    fn parsers_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        let _ = parse_exposures(bytes.as_slice());
        let _ = parse_outcomes(bytes.as_slice());
        let _ = parse_grid(bytes.as_slice());
        if let Ok(text) = std::str::from_utf8(&bytes) {
            let _ = RunConfig::from_toml(text);
            let _ = ParamSet::from_json(text);
        }
    }

    #[test]
    fn ingest_never_panics(body_e in csvish(), body_o in csvish()) {
        let e = format!("subject_id,t,exposure\n{body_e}");
        let o = format!("subject_id,time,event\n{body_o}");
        if let Ok(d) = ingest(e.as_bytes(), o.as_bytes(), true) {
            prop_assert_eq!(d.panel.n_subjects(), d.outcomes.len());
        }
        let g = format!("x,l,value\n{body_e}");
        let _ = parse_grid(g.as_bytes());
    }
}
