#![no_main]

use avsr::labels::{parse_alignment, serialize_alignment, PhonemeSet};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let set = PhonemeSet::standard();
    if let Ok(labels) = parse_alignment(text, 16_000, set) {
        // Whatever parses must survive a round trip.
        let again = serialize_alignment(&labels, 16_000, set).expect("serialize parsed labels");
        assert_eq!(parse_alignment(&again, 16_000, set).expect("reparse"), labels);
    }
});
