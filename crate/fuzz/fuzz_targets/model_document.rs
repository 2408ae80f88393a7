#![no_main]

use libfuzzer_sys::fuzz_target;
use lagsurv::ParamSet;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(params) = ParamSet::from_json(text) {
        let again = ParamSet::from_json(&params.to_json()).unwrap();
        assert_eq!(again.values, params.values);
    }
});
