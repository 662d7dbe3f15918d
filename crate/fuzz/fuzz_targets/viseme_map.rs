#![no_main]

use avsr::labels::{PhonemeSet, VisemeMap};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let set = PhonemeSet::standard();
    if let Ok(map) = VisemeMap::parse(text, set) {
        for p in 0..set.len() {
            assert!(map.map(p).expect("total map") < map.viseme_count());
        }
    }
});
