#![no_main]

use avsr::models::ModelConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ModelConfig::parse(text) {
        assert_eq!(ModelConfig::parse(&cfg.to_kv_string()).expect("canonical form parses"), cfg);
    }
});
