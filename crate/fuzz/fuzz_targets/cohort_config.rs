#![no_main]

use chronorules_core::synthgen::CohortConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = CohortConfig::from_toml_str(text);
    }
});
