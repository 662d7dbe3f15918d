#![no_main]

use avsr::corpus::SynthSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = SynthSpec::parse(text, "fuzz") {
        assert_eq!(SynthSpec::parse(&spec.to_kv_string(), "fuzz").expect("canonical form parses"), spec);
    }
});
