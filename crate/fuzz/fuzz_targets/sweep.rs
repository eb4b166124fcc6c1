#![no_main]

use libfuzzer_sys::fuzz_target;
use nlap_core::config::Sweep;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(sweep) = Sweep::parse(text) else { return };
    let values = sweep.values();
    assert_eq!(values.len(), sweep.steps);
    assert!(values.iter().all(|v| v.is_finite()));
});
