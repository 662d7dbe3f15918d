#![no_main]

use avsr::kv::KvDoc;
use avsr::resources::SweepGrid;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(doc) = KvDoc::parse_str(text, "fuzz") else { return };
    if let Ok(grid) = SweepGrid::from_kv(&doc) {
        // Huge grids are valid but not worth materializing here.
        if grid.layers.len().saturating_mul(grid.hidden.len()) <= 4096 {
            assert_eq!(grid.configs().len(), grid.layers.len() * grid.hidden.len());
        }
    }
});
