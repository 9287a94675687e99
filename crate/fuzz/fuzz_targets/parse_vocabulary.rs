#![no_main]

use libfuzzer_sys::fuzz_target;
use milkit::data::{parse_vocabulary, vocabulary_json};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(classes) = parse_vocabulary(text) {
        assert_eq!(parse_vocabulary(&vocabulary_json(&classes)).unwrap(), classes);
    }
});
