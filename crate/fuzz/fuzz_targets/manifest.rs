#![no_main]

use std::path::Path;

use avsr::corpus::CorpusManifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = CorpusManifest::from_json(text, Path::new("/nonexistent"));
});
