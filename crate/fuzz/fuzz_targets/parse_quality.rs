#![no_main]

use libfuzzer_sys::fuzz_target;
use milkit::data::parse_quality;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let classes: Vec<String> = ["violin", "harpsichord", "bell", "class_3", "a,b"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if let Ok(map) = parse_quality(text, &classes) {
        for (&k, &q) in map.iter() {
            assert!(k < classes.len());
            assert!((0.0..=1.0).contains(&q));
        }
    }
});
