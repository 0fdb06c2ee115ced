#![no_main]

use libfuzzer_sys::fuzz_target;
use timefilter_cli::config::{parse_config_text, parse_json, RunConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(raw) = parse_json(text) {
        let _ = RunConfig::from_raw(&raw);
    }
    let _ = parse_config_text(text);
});
