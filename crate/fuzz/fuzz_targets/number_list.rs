#![no_main]

use libfuzzer_sys::fuzz_target;
use timefilter_cli::config::{parse_nu, parse_number_list};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(values) = parse_number_list(text) {
        assert!(!values.is_empty());
        assert!(values.iter().all(|v| v.is_finite()));
    }
    let _ = parse_nu(text);
});
