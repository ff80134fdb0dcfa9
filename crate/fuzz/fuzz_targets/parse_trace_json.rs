#![no_main]

use home_core::trace::{parse_trace_json, write_trace_json};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(rec) = parse_trace_json(text) {
        let again = parse_trace_json(&write_trace_json(&rec).unwrap()).unwrap();
        assert_eq!(again, rec);
    }
});
