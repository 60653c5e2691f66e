#![no_main]

use chronorules_core::RuleSet;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(rules) = RuleSet::from_json(text) {
        let again = RuleSet::from_json(&rules.to_json()).expect("serialized rule set parses");
        assert_eq!(again, rules);
    }
});
