#![no_main]

use home_core::trace::{parse_trace_csv, write_trace_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(rec) = parse_trace_csv(text) {
        let again = parse_trace_csv(&write_trace_csv(&rec).unwrap()).unwrap();
        assert_eq!(again.losses.len(), rec.losses.len());
        assert_eq!(again.randomization_events, rec.randomization_events);
    }
});
