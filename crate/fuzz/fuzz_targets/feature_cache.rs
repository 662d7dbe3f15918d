#![no_main]

use avsr::signal::{decode_features, encode_features};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(seq) = decode_features(data) {
        assert_eq!(encode_features(&seq), data);
    }
});
