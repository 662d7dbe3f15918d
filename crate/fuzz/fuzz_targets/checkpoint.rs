#![no_main]

use avsr::models::{decode_checkpoint, encode_checkpoint};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = decode_checkpoint(data, None) {
        let bytes = encode_checkpoint(&ckpt).expect("encode decoded checkpoint");
        decode_checkpoint(&bytes, Some(&ckpt.config)).expect("re-decode");
    }
});
