#![no_main]

use libfuzzer_sys::fuzz_target;
use nlap_core::nonlinearity::parse_catalog;

fuzz_target!(|data: &[u8]| {
    let Ok(name) = std::str::from_utf8(data) else { return };
    if let Ok(entry) = parse_catalog(name) {
        // the printed form parses back to the same entry
        let again = parse_catalog(&entry.to_string()).expect("display form parses");
        assert_eq!(entry, again);
    }
});
