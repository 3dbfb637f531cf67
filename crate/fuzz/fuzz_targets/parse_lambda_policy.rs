#![no_main]

use libfuzzer_sys::fuzz_target;
use stratppi::io::parse_lambda_policy;
use stratppi::LambdaPolicy;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(LambdaPolicy::Fixed(values)) = parse_lambda_policy(s) {
            assert!(!values.is_empty());
            assert!(values.iter().all(|v| v.is_finite()));
        }
    }
});
