#![no_main]

use libfuzzer_sys::{fuzz_target, Corpus};
use nlap_core::config::RunConfig;

fuzz_target!(|data: &[u8]| -> Corpus {
    let Ok(text) = std::str::from_utf8(data) else {
        return Corpus::Reject;
    };
    let Ok(cfg) = RunConfig::from_json(text) else {
        return Corpus::Keep;
    };
    if cfg.validate().is_ok() {
        let _ = cfg.lambda_choice();
        let _ = cfg.nonlinearity_spec();
    }
    Corpus::Keep
});
