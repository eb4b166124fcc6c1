#![no_main]

use libfuzzer_sys::fuzz_target;
use nlap_core::nonlinearity::parse_table;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(table) = parse_table(text) else { return };
    assert!(!table.is_empty());
    for x in [-1e3, -1.0, 0.0, 0.5, 1.0, 1e3] {
        let _ = table.eval(x);
    }
});
