#![no_main]

use libfuzzer_sys::fuzz_target;
use lagsurv_cli::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = RunConfig::from_toml(text) {
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.train.seed, cfg.seed);
    }
});
