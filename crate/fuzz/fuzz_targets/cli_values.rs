#![no_main]

use avsr::models::{parse_conv_stack, ConvSpec};
use avsr::signal::Snr;
use avsr::training::NoiseSchedule;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(Snr::Db(db)) = text.parse::<Snr>() {
        assert!(db.is_finite());
    }
    let _ = text.parse::<NoiseSchedule>();
    if let Ok(stack) = parse_conv_stack(text) {
        for op in stack {
            assert_eq!(op.to_string().parse::<ConvSpec>().expect("display parses"), op);
        }
    }
});
