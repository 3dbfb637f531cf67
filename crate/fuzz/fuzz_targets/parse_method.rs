#![no_main]

use libfuzzer_sys::fuzz_target;
use stratppi::io::parse_method;
use stratppi::Allocation;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(config) = parse_method(s, 0.1, Allocation::Proportional) {
            assert!(config.validate().is_ok());
        }
    }
});
