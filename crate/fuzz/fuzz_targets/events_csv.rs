#![no_main]

use chronorules_core::event_model::read_events;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = read_events(data, None);
});
