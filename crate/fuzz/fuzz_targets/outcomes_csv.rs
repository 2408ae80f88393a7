#![no_main]

use libfuzzer_sys::fuzz_target;
use lagsurv_cli::ingest::parse_outcomes;

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = parse_outcomes(data) {
        assert!(records.iter().all(|r| r.time >= 1 && !r.subject_id.is_empty()));
    }
});
