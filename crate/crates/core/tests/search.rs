mod common;

use chronorules_core::opus::{search_in, search_in_par, SearchOptions};
use chronorules_core::{Bits, SearchConfig};
use common::{brute_force_best, coverage_from};
use proptest::prelude::*;

type Table = (Vec<Vec<bool>>, Vec<bool>);

fn table() -> impl Strategy<Value = Table> {
    (2usize..=40, 1usize..=9).prop_flat_map(|(n, l)| {
        (
            prop::collection::vec(prop::collection::vec(prop::bool::weighted(0.6), n), l),
            prop::collection::vec(prop::bool::weighted(0.3), n).prop_map(|mut labels| {
                labels[0] = true;
                labels
            }),
        )
    })
}

fn beta2() -> impl Strategy<Value = f64> {
    prop::sample::select(vec![0.0, 0.01, 0.25, 0.5, 1.0, 4.0])
}

fn config(beta2: f64, max_rule_len: usize) -> SearchConfig {
    SearchConfig {
        beta2,
        max_rule_len,
        max_set_size: 1,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn search_matches_brute_force((cols, labels) in table(), b in beta2(), len in 1usize..=3) {
        let cov = coverage_from(&cols, &labels);
        let mask = Bits::ones(labels.len());
        let (score, indices, tp, fp) = brute_force_best(&cov, &mask, b, len);
        let (rule, _) = search_in(&cov, &mask, &config(b, len), SearchOptions::default()).unwrap();
        prop_assert_eq!(rule.score.to_bits(), score.to_bits());
        prop_assert_eq!(&rule.indices, &indices);
        prop_assert_eq!((rule.counts.tp, rule.counts.fp), (tp, fp));
    }

    #[test]
    fn masked_search_matches_brute_force(
        (cols, labels) in table(),
        keep in prop::collection::vec(any::<bool>(), 40),
        b in beta2(),
        len in 1usize..=3,
    ) {
        let cov = coverage_from(&cols, &labels);
        let mask = Bits::from_fn(labels.len(), |i| i == 0 || keep[i]);
        let (score, indices, _, _) = brute_force_best(&cov, &mask, b, len);
        let (rule, _) = search_in(&cov, &mask, &config(b, len), SearchOptions::default()).unwrap();
        prop_assert_eq!(rule.score.to_bits(), score.to_bits());
        prop_assert_eq!(&rule.indices, &indices);
        prop_assert_eq!(rule.counts.pos_total + rule.counts.neg_total, mask.count_ones());
    }

    #[test]
    fn pruning_never_changes_the_answer((cols, labels) in table(), b in beta2(), len in 1usize..=3) {
        let cov = coverage_from(&cols, &labels);
        let mask = Bits::ones(labels.len());
        let cfg = config(b, len);
        let (pruned, ps) = search_in(&cov, &mask, &cfg, SearchOptions::default()).unwrap();
        let no_bound = SearchOptions { optimistic_pruning: false, ..SearchOptions::default() };
        let (full, fs) = search_in(&cov, &mask, &cfg, no_bound).unwrap();
        let (raw, _) = search_in(&cov, &mask, &cfg, SearchOptions::exhaustive()).unwrap();
        prop_assert_eq!(&pruned, &full);
        prop_assert_eq!(&pruned, &raw);
        prop_assert!(ps.expanded <= fs.expanded);
        prop_assert!(ps.evaluated <= fs.evaluated);
    }

    #[test]
    fn parallel_equals_sequential((cols, labels) in table(), b in beta2(), len in 1usize..=3) {
        let cov = coverage_from(&cols, &labels);
        let mask = Bits::ones(labels.len());
        let cfg = config(b, len);
        let (seq, _) = search_in(&cov, &mask, &cfg, SearchOptions::default()).unwrap();
        let par = search_in_par(&cov, &mask, &cfg, SearchOptions::default()).unwrap();
        prop_assert_eq!(seq, par);
    }

    #[test]
    fn larger_beta2_trades_precision_for_recall(
        (cols, labels) in table(),
        (lo, hi) in (0usize..6, 0usize..6).prop_map(|(a, b)| (a.min(b), a.max(b))),
        len in 1usize..=3,
    ) {
        let grid = [0.0, 0.01, 0.25, 0.5, 1.0, 4.0];
        let cov = coverage_from(&cols, &labels);
        let mask = Bits::ones(labels.len());
        let (a, _) = search_in(&cov, &mask, &config(grid[lo], len), SearchOptions::default()).unwrap();
        let (b, _) = search_in(&cov, &mask, &config(grid[hi], len), SearchOptions::default()).unwrap();
        prop_assert!(a.counts.tp <= b.counts.tp);
        prop_assert!(a.counts.precision() >= b.counts.precision());
    }
}

#[test]
fn longer_rules_never_score_lower() {
    let cols = vec![
        vec![true, true, true, false, true, false],
        vec![true, false, true, true, true, true],
        vec![true, true, false, true, false, true],
    ];
    let labels = [true, true, true, false, false, false];
    let cov = coverage_from(&cols, &labels);
    let mask = Bits::ones(6);
    let mut last = 0.0;
    for len in 1..=3 {
        let (rule, _) = search_in(&cov, &mask, &config(0.25, len), SearchOptions::default()).unwrap();
        assert!(rule.score >= last);
        last = rule.score;
    }
}
