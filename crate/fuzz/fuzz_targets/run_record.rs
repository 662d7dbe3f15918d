#![no_main]

use avsr_cli::{NoiseRow, RunRecord};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(r) = RunRecord::from_json(text) {
        let again = RunRecord::from_json(&r.to_json().expect("serialize")).expect("reparse");
        assert_eq!(again.run_id, r.run_id);
    }
    let _ = NoiseRow::parse_csv(text);
});
