#![no_main]

use libfuzzer_sys::fuzz_target;
use milkit_cli::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = RunConfig::parse(text) {
        let written = config.to_text();
        let again = RunConfig::parse(&written).expect("written config parses");
        assert_eq!(again.to_text(), written);
    }
});
