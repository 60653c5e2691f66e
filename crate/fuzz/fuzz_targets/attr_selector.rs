#![no_main]

use chronorules_core::tabulate::AttributeSchema;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = AttributeSchema::from_selector(text);
    }
});
