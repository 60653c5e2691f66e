//! Replays the checked-in fuzz seeds through the parser entry points.

use chronorules_core::event_model::read_events;
use chronorules_core::synthgen::CohortConfig;
use chronorules_core::tabulate::AttributeSchema;
use chronorules_core::RuleSet;
use std::path::PathBuf;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|entry| {
            let path = entry.unwrap().path();
            (path.display().to_string(), std::fs::read(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn events_seeds() {
    let results: Vec<bool> = seeds("events_csv")
        .iter()
        .map(|(_, data)| read_events(data.as_slice(), None).is_ok())
        .collect();
    assert!(results.contains(&true) && results.contains(&false), "{results:?}");
}

#[test]
fn rules_seeds_round_trip() {
    for (name, data) in seeds("rules_json") {
        let text = String::from_utf8(data).unwrap();
        if let Ok(rules) = RuleSet::from_json(&text) {
            assert_eq!(RuleSet::from_json(&rules.to_json()).unwrap(), rules, "{name}");
        }
    }
}

#[test]
fn cohort_config_seeds() {
    let ok: Vec<bool> = seeds("cohort_config")
        .iter()
        .map(|(_, data)| CohortConfig::from_toml_str(std::str::from_utf8(data).unwrap()).is_ok())
        .collect();
    assert_eq!(ok, [false, false, true]);
}

#[test]
fn selector_seeds() {
    for (name, data) in seeds("attr_selector") {
        let text = String::from_utf8(data).unwrap();
        let parsed = AttributeSchema::from_selector(&text);
        assert_eq!(parsed.is_err(), name.ends_with("duplicate"), "{name}: {parsed:?}");
    }
}
