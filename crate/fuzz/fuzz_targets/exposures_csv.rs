#![no_main]

use libfuzzer_sys::fuzz_target;
use lagsurv_cli::ingest::parse_exposures;

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = parse_exposures(data) {
        for r in &records {
            assert!(r.t >= 1);
            assert!(r.exposure.is_finite());
        }
    }
});
