#![no_main]

use libfuzzer_sys::fuzz_target;
use lagsurv_cli::ingest::{parse_grid, write_grid};

fuzz_target!(|data: &[u8]| {
    if let Ok(grid) = parse_grid(data) {
        assert_eq!(grid.values.len(), grid.x_grid.len() * grid.l_grid.len());
        let mut buf = Vec::new();
        write_grid(&mut buf, &grid).unwrap();
        assert_eq!(parse_grid(buf.as_slice()).unwrap(), grid);
    }
});
