#![no_main]

use libfuzzer_sys::fuzz_target;
use timefilter_cli::config::{parse_kv, RunConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(raw) = parse_kv(text) {
        // every parsed entry survives a write/read round trip
        let again: String = raw.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        assert_eq!(parse_kv(&again).unwrap(), raw);
        let _ = RunConfig::from_raw(&raw);
    }
});
