#![no_main]

use home_core::problems::parse_logreg_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(p) = parse_logreg_csv(text, 0.01) {
        assert!(p.labels().iter().all(|&y| y == 0.0 || y == 1.0));
    }
});
