#![no_main]

use libfuzzer_sys::fuzz_target;
use minifair_core::eval;

// Once written by us, a trace must survive another parse/write cycle
// unchanged.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(trace) = eval::parse_trace_csv(text) {
        let once = eval::trace_csv_string(&trace);
        let reparsed = eval::parse_trace_csv(&once).expect("own output parses");
        assert_eq!(eval::trace_csv_string(&reparsed), once);
    }
});
