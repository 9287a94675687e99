#![no_main]

use libfuzzer_sys::fuzz_target;
use milkit::metrics::EvalReport;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(report) = EvalReport::from_json(text) {
        let written = report.to_json();
        let again = EvalReport::from_json(&written).expect("written report parses");
        assert_eq!(again.to_json(), written);
    }
});
