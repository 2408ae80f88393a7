#![no_main]

use libfuzzer_sys::fuzz_target;
use lagsurv_cli::ingest::ingest;

// Input is the exposure file and the outcome file separated by a NUL byte.
fuzz_target!(|data: &[u8]| {
    let Some(split) = data.iter().position(|&b| b == 0) else {
        return;
    };
    let (e, o) = (&data[..split], &data[split + 1..]);
    if o.len() + e.len() > 1 << 16 {
        return;
    }
    for normalize in [false, true] {
        if let Ok(d) = ingest(e, o, normalize) {
            assert_eq!(d.panel.n_subjects(), d.outcomes.len());
            assert!(d.outcomes.iter().all(|x| x.time <= d.panel.horizon()));
            if normalize {
                assert!(d.panel.values().iter().all(|v| *v <= 1.0));
            }
        }
    }
});
