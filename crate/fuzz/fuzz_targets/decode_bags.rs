#![no_main]

use libfuzzer_sys::fuzz_target;
use milkit::data::{decode_bags, encode_bags};

// The encoding is canonical, so anything accepted must re-encode to itself.
fuzz_target!(|data: &[u8]| {
    if let Ok(dataset) = decode_bags(data) {
        assert_eq!(encode_bags(&dataset), data);
    }
});
