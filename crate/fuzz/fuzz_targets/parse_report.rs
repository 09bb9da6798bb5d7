#![no_main]

use libfuzzer_sys::fuzz_target;
use nuisfim_cli::report::Report;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(report) = Report::parse(text) {
            // a report that parses must serialize and parse again
            let json = report.to_json();
            Report::parse(&json).expect("re-serialized report must parse");
        }
    }
});
