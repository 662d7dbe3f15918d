#![no_main]

use avsr::corpus::{decode_images, encode_images};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(seq) = decode_images(data) {
        let again = decode_images(&encode_images(&seq)).expect("re-decode");
        assert_eq!(again, seq);
    }
});
