mod common;

use chronorules_core::eval::{baseline_tti, replay, stratify};
use chronorules_core::event_model::{build_timelines, read_events, write_events, ClientTimeline};
use chronorules_core::features::{Feature, Operator};
use chronorules_core::opus::{search, search_in, SearchOptions};
use chronorules_core::ruleset::{learn_rules, union_coverage, Conjunction};
use chronorules_core::synthgen::{generate_cohort, CohortConfig};
use chronorules_core::tabulate::{meeting_schedule, Attribute, AttributeSchema};
use chronorules_core::{Bits, RuleSet, SearchConfig, WindowSize};
use common::{coverage_from, random_coverage};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cfg(beta2: f64, max_rule_len: usize, max_set_size: usize) -> SearchConfig {
    SearchConfig {
        beta2,
        max_rule_len,
        max_set_size,
    }
}

/// Positives split into two groups, each captured exactly by one feature.
fn two_clusters(a: usize, b: usize, neg: usize) -> chronorules_core::CoverageTable {
    let n = a + b + neg;
    let labels: Vec<bool> = (0..n).map(|i| i < a + b).collect();
    let first: Vec<bool> = (0..n).map(|i| i < a).collect();
    let second: Vec<bool> = (0..n).map(|i| i >= a && i < a + b).collect();
    let noise: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
    coverage_from(&[first, second, noise], &labels)
}

#[test]
fn two_clusters_need_two_rules() {
    let cov = two_clusters(12, 7, 30);
    let all = Bits::ones(cov.num_rows());
    let one = learn_rules(&cov, &all, &cfg(0.25, 2, 1)).unwrap();
    let two = learn_rules(&cov, &all, &cfg(0.25, 2, 2)).unwrap();
    let recall = |rules| {
        let hit = union_coverage(&cov, rules).and_count(cov.labels());
        hit as f64 / cov.positive_count() as f64
    };
    assert_eq!(recall(&two), 1.0);
    assert_eq!(recall(&one), search(&cov, &cfg(0.25, 2, 1)).unwrap().counts.recall());
    assert_eq!(one.len(), 1);
    assert_eq!(two.len(), 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn set_recall_grows_with_set_size(seed in any::<u64>(), b in prop::sample::select(vec![0.01, 0.25, 1.0])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cov = random_coverage(&mut rng, 48, 10);
        let all = Bits::ones(cov.num_rows());
        let mut last = 0;
        for ms in 1..=4 {
            let rules = learn_rules(&cov, &all, &cfg(b, 2, ms)).unwrap();
            prop_assert!(rules.len() <= ms);
            prop_assert!(rules.iter().all(|r| r.counts.tp > 0));
            let tp = union_coverage(&cov, &rules).and_count(cov.labels());
            prop_assert!(tp >= last);
            last = tp;
        }
    }

    #[test]
    fn first_covering_rule_is_the_global_optimum(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cov = random_coverage(&mut rng, 48, 10);
        let all = Bits::ones(cov.num_rows());
        let rules = learn_rules(&cov, &all, &cfg(0.25, 3, 3)).unwrap();
        let (best, _) = search_in(&cov, &all, &cfg(0.25, 3, 1), SearchOptions::default()).unwrap();
        prop_assert_eq!(&rules[0], &best);
    }

    #[test]
    fn folds_are_stratified(labels in prop::collection::vec(any::<bool>(), 20..200), k in 2usize..8, seed in any::<u64>()) {
        let bits = Bits::from_fn(labels.len(), |i| labels[i]);
        let pos = bits.count_ones();
        prop_assume!(pos >= k && labels.len() - pos >= k);
        let folds = stratify(&bits, k, seed).unwrap();
        prop_assert_eq!(&folds, &stratify(&bits, k, seed).unwrap());
        let mut p = vec![0usize; k];
        let mut n = vec![0usize; k];
        for (i, &f) in folds.fold_of.iter().enumerate() {
            prop_assert!(f < k);
            if labels[i] { p[f] += 1 } else { n[f] += 1 }
        }
        let spread = |v: &[usize]| v.iter().max().unwrap() - v.iter().min().unwrap();
        prop_assert!(spread(&p) <= 1);
        prop_assert!(spread(&n) <= 1);
        let sizes: Vec<usize> = p.iter().zip(&n).map(|(a, b)| a + b).collect();
        prop_assert!(spread(&sizes) <= 1);
    }
}

fn small_cohort(seed: u64) -> Vec<ClientTimeline> {
    let config = CohortConfig {
        population_size: 120,
        chronic_fraction: 0.2,
        seed,
        ..CohortConfig::default()
    };
    build_timelines(generate_cohort(&config).unwrap().events)
}

fn sleep_rule(window: u32, threshold: f64) -> RuleSet {
    RuleSet {
        window: WindowSize::new(window).unwrap(),
        schema: AttributeSchema::core(),
        rules: vec![Conjunction {
            conjuncts: vec![Feature::new(0, Operator::Ge, threshold)],
        }],
        training: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn replay_identities(seed in any::<u64>(), t in 0.0f64..80.0) {
        let timelines = small_cohort(seed);
        let config = CohortConfig::default();
        let meetings = meeting_schedule(config.study_start, config.study_end());
        let rules = sleep_rule(90, t);
        let report = replay(&timelines, &rules, rules.window, &meetings).unwrap();
        let chronic = timelines.iter().filter(|tl| tl.chronic_label().is_chronic).count();
        prop_assert_eq!(report.tp + report.fn_, chronic);
        prop_assert_eq!(report.population(), timelines.len());
        prop_assert_eq!(report.meetings.iter().map(|m| m.listed).sum::<usize>(), report.tp + report.fp);
        for c in &report.clients {
            prop_assert_eq!(c.tti_days.is_some(), c.chronic);
            prop_assert!(c.tti_days.unwrap_or(0) >= 0);
        }
    }

    #[test]
    fn extra_disjunct_never_delays_detection(seed in any::<u64>(), t in 10.0f64..80.0, u in 0.0f64..6.0) {
        let timelines = small_cohort(seed);
        let config = CohortConfig::default();
        let meetings = meeting_schedule(config.study_start, config.study_end());
        let narrow = sleep_rule(60, t);
        let mut wide = narrow.clone();
        wide.rules.push(Conjunction { conjuncts: vec![Feature::new(1, Operator::Ge, u)] });
        let a = replay(&timelines, &narrow, narrow.window, &meetings).unwrap();
        let b = replay(&timelines, &wide, wide.window, &meetings).unwrap();
        prop_assert!(b.tp >= a.tp);
        for (x, y) in a.clients.iter().zip(&b.clients) {
            if let Some(dx) = x.detected {
                prop_assert!(y.detected.is_some_and(|dy| dy <= dx));
                if x.chronic {
                    prop_assert!(y.tti_days <= x.tti_days);
                }
            }
        }
    }
}

#[test]
fn always_true_rule_lists_clients_at_first_eligible_meeting() {
    let timelines = small_cohort(7);
    let config = CohortConfig::default();
    let meetings = meeting_schedule(config.study_start, config.study_end());
    let rules = sleep_rule(30, 0.0);
    let report = replay(&timelines, &rules, rules.window, &meetings).unwrap();
    for (tl, c) in timelines.iter().zip(&report.clients) {
        let first = tl.first_event_date().unwrap();
        let expected = meetings.iter().copied().find(|&m| {
            (m - first).num_days() >= 30
                && tl.events().iter().any(|e| e.date < m && (m - e.date).num_days() <= 30)
        });
        assert_eq!(c.detected, expected, "{}", tl.client_id.0);
    }
    assert!(baseline_tti(&timelines).is_ok());
}

#[test]
fn events_csv_round_trip() {
    let events = generate_cohort(&CohortConfig {
        population_size: 40,
        ..CohortConfig::default()
    })
    .unwrap()
    .events;
    let mut buf = Vec::new();
    write_events(&mut buf, &events).unwrap();
    assert_eq!(read_events(&buf[..], None).unwrap(), events);
}

#[test]
fn rules_json_round_trip() {
    let rules = RuleSet {
        rules: vec![
            Conjunction {
                conjuncts: vec![
                    Feature::new(0, Operator::Ge, 78.0),
                    Feature::new(2, Operator::Lt, 3.5),
                ],
            },
            Conjunction {
                conjuncts: vec![Feature::new(1, Operator::Ge, 0.5)],
            },
        ],
        ..sleep_rule(120, 1.0)
    };
    let back = RuleSet::from_json(&rules.to_json()).unwrap();
    assert_eq!(back, rules);
    assert_eq!(back.schema.attributes()[2], Attribute::EntryConsl);
}
