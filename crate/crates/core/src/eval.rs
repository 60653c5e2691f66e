//! Stratified cross-validation on coverage tables and the monthly triage
//! replay with time-to-identification (TTI).

use std::io;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bits::Bits;
use crate::event_model::{ClientId, ClientTimeline};
use crate::features::CoverageTable;
use crate::opus::{MetricCounts, SearchConfig};
use crate::ruleset::{counts_on, learn_rules, union_coverage, RuleSet, RuleSetError};
use crate::stats::median;
use crate::tabulate::{is_eligible, window_counts, WindowSize};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("{class} class has {size} rows, fewer than {k} folds")]
    ClassTooSmall {
        class: &'static str,
        size: usize,
        k: usize,
    },
    #[error("training split for fold {0} has no positives")]
    NoTrainingPositives(usize),
    #[error(transparent)]
    Learn(#[from] RuleSetError),
    #[error("rule set was learned for a {rules}-day window, replay asked for {requested}")]
    WindowMismatch { rules: u32, requested: u32 },
    #[error("no chronic clients in the population")]
    NoChronic,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    /// Fold index of every row.
    pub fold_of: Vec<usize>,
}

impl FoldAssignment {
    pub fn test_mask(&self, fold: usize) -> Bits {
        Bits::from_fn(self.fold_of.len(), |r| self.fold_of[r] == fold)
    }
}

/// Shuffles each class with `seed`, then deals rows round-robin into `k`
/// folds. Negatives continue dealing where positives stopped so fold sizes
/// also stay within one row of each other.
pub fn stratify(labels: &Bits, k: usize, seed: u64) -> Result<FoldAssignment, EvalError> {
    if k < 2 {
        return Err(EvalError::TooFewFolds(k));
    }
    let mut pos: Vec<usize> = labels.iter_ones().collect();
    let mut neg: Vec<usize> = labels.not().iter_ones().collect();
    for (class, rows) in [("positive", &pos), ("negative", &neg)] {
        if rows.len() < k {
            return Err(EvalError::ClassTooSmall {
                class,
                size: rows.len(),
                k,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut fold_of = vec![0; labels.len()];
    for (i, &r) in pos.iter().chain(&neg).enumerate() {
        fold_of[r] = i % k;
    }
    Ok(FoldAssignment { k, seed, fold_of })
}

pub fn stratified_folds(
    coverage: &CoverageTable,
    k: usize,
    seed: u64,
) -> Result<FoldAssignment, EvalError> {
    stratify(coverage.labels(), k, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvReport {
    /// Held-out counts per fold, in fold order.
    pub folds: Vec<MetricCounts>,
    pub mean_precision: f64,
    pub mean_recall: f64,
}

/// Learns on k-1 folds and scores the held-out fold, for every fold.
/// Precision of a fold with no positive predictions counts as 0.
pub fn cross_validate(
    coverage: &CoverageTable,
    config: &SearchConfig,
    k: usize,
    seed: u64,
) -> Result<CvReport, EvalError> {
    let folds = stratified_folds(coverage, k, seed)?;
    let per_fold: Vec<MetricCounts> = (0..k)
        .into_par_iter()
        .map(|fold| {
            let test = folds.test_mask(fold);
            let train = test.not();
            if train.and_count(coverage.labels()) == 0 {
                return Err(EvalError::NoTrainingPositives(fold));
            }
            let rules = learn_rules(coverage, &train, config)?;
            Ok(counts_on(coverage, &union_coverage(coverage, &rules), &test))
        })
        .collect::<Result<_, _>>()?;
    let n = per_fold.len() as f64;
    Ok(CvReport {
        mean_precision: per_fold.iter().map(MetricCounts::precision).sum::<f64>() / n,
        mean_recall: per_fold.iter().map(MetricCounts::recall).sum::<f64>() / n,
        folds: per_fold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClientOutcome {
    pub client_id: ClientId,
    pub chronic: bool,
    pub detected: Option<NaiveDate>,
    /// Defined for chronic clients only.
    pub tti_days: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeetingList {
    pub date: NaiveDate,
    /// Clients newly placed on the triage list at this meeting.
    pub listed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub window_days: u32,
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub fp: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub median_tti_days: Option<f64>,
    pub clients_per_month: f64,
    pub meetings: Vec<MeetingList>,
    pub clients: Vec<ClientOutcome>,
}

impl ReplayReport {
    pub fn population(&self) -> usize {
        self.tp + self.fn_ + self.fp + self.tn
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per client: `client_id,chronic,detected,detection_date,tti_days`.
    pub fn write_clients_csv<W: io::Write>(&self, writer: W) -> io::Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["client_id", "chronic", "detected", "detection_date", "tti_days"])?;
        for c in &self.clients {
            wtr.write_record([
                c.client_id.0.as_str(),
                if c.chronic { "1" } else { "0" },
                if c.detected.is_some() { "1" } else { "0" },
                &c.detected.map(|d| d.to_string()).unwrap_or_default(),
                &c.tti_days.map(|t| t.to_string()).unwrap_or_default(),
            ])?;
        }
        wtr.flush()
    }
}

/// First meeting at which the rule set lists the client, if any.
pub fn detection_date(
    timeline: &ClientTimeline,
    ruleset: &RuleSet,
    meetings: &[NaiveDate],
) -> Option<NaiveDate> {
    meetings.iter().copied().find(|&d| {
        is_eligible(timeline, ruleset.window, d)
            && ruleset.matches(&window_counts(timeline, &ruleset.schema, ruleset.window, d))
    })
}

/// Replays the monthly meetings over the whole population. A detected client
/// is never re-listed. TTI runs from the first stay to detection, or to the
/// first day the chronic definition holds for clients never detected.
pub fn replay(
    timelines: &[ClientTimeline],
    ruleset: &RuleSet,
    window: WindowSize,
    meetings: &[NaiveDate],
) -> Result<ReplayReport, EvalError> {
    if ruleset.window != window {
        return Err(EvalError::WindowMismatch {
            rules: ruleset.window.days(),
            requested: window.days(),
        });
    }
    let clients: Vec<ClientOutcome> = timelines
        .par_iter()
        .map(|tl| {
            let label = tl.chronic_label();
            let detected = detection_date(tl, ruleset, meetings);
            let tti_days = match (label.first_qualifying_day, tl.first_stay_date()) {
                (Some(qualifying), Some(first)) => {
                    let end = detected.unwrap_or(qualifying);
                    Some((end - first).num_days().max(0))
                }
                _ => None,
            };
            ClientOutcome {
                client_id: tl.client_id.clone(),
                chronic: label.is_chronic,
                detected,
                tti_days,
            }
        })
        .collect();

    let (mut tp, mut fn_, mut fp, mut tn) = (0, 0, 0, 0);
    for c in &clients {
        match (c.chronic, c.detected.is_some()) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
        }
    }
    let ttis: Vec<f64> = clients
        .iter()
        .filter_map(|c| c.tti_days.map(|t| t as f64))
        .collect();
    let meeting_lists: Vec<MeetingList> = meetings
        .iter()
        .map(|&date| MeetingList {
            date,
            listed: clients.iter().filter(|c| c.detected == Some(date)).count(),
        })
        .collect();
    let detected = tp + fp;
    let counts = MetricCounts {
        tp,
        fp,
        pos_total: tp + fn_,
        neg_total: fp + tn,
    };
    Ok(ReplayReport {
        window_days: window.days(),
        tp,
        fn_,
        fp,
        tn,
        precision: counts.precision(),
        recall: counts.recall(),
        median_tti_days: median(&ttis),
        clients_per_month: if meetings.is_empty() {
            0.0
        } else {
            detected as f64 / meetings.len() as f64
        },
        meetings: meeting_lists,
        clients,
    })
}

/// Median days from first stay to first meeting the chronic definition,
/// over chronic clients.
pub fn baseline_tti(timelines: &[ClientTimeline]) -> Result<f64, EvalError> {
    let delays: Vec<f64> = timelines
        .iter()
        .filter_map(|tl| {
            let q = tl.chronic_label().first_qualifying_day?;
            Some((q - tl.first_stay_date()?).num_days() as f64)
        })
        .collect();
    median(&delays).ok_or(EvalError::NoChronic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_model::{build_timelines, EntryType, EventRecord};
    use crate::features::{Feature, Operator};
    use crate::ruleset::Conjunction;
    use crate::tabulate::{meeting_schedule, AttributeSchema};
    use chrono::Duration;

    fn labels(pos: usize, neg: usize) -> Bits {
        Bits::from_fn(pos + neg, |i| i < pos)
    }

    #[test]
    fn folds_balance_exactly_when_divisible() {
        let l = labels(10, 90);
        let f = stratify(&l, 10, 3).unwrap();
        for fold in 0..10 {
            let m = f.test_mask(fold);
            assert_eq!(m.and_count(&l), 1);
            assert_eq!(m.count_ones(), 10);
        }
    }

    #[test]
    fn folds_are_seed_deterministic() {
        let l = labels(13, 57);
        assert_eq!(stratify(&l, 5, 9).unwrap(), stratify(&l, 5, 9).unwrap());
        assert_ne!(stratify(&l, 5, 9).unwrap(), stratify(&l, 5, 10).unwrap());
    }

    #[test]
    fn remainder_positives_spread() {
        let l = labels(11, 40);
        let f = stratify(&l, 10, 1).unwrap();
        let mut counts: Vec<usize> = (0..10).map(|k| f.test_mask(k).and_count(&l)).collect();
        counts.sort();
        assert_eq!(counts, vec![1, 1, 1, 1, 1, 1, 1, 1, 1, 2]);
    }

    #[test]
    fn small_class_is_rejected() {
        assert!(matches!(
            stratify(&labels(3, 40), 5, 0),
            Err(EvalError::ClassTooSmall { class: "positive", size: 3, k: 5 })
        ));
        assert!(matches!(stratify(&labels(3, 3), 1, 0), Err(EvalError::TooFewFolds(1))));
    }

    #[test]
    fn separable_table_scores_perfectly() {
        let l = labels(20, 30);
        let feats = vec![
            Feature::new(0, Operator::Ge, 0.5),
            Feature::new(0, Operator::Lt, 0.5),
        ];
        let cov = CoverageTable::new(feats, vec![l.clone(), l.not()], l).unwrap();
        let rep = cross_validate(&cov, &SearchConfig::default(), 10, 5).unwrap();
        assert_eq!(rep.mean_precision, 1.0);
        assert_eq!(rep.mean_recall, 1.0);
        assert_eq!(rep.folds.len(), 10);
    }

    fn day(n: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2010, 1, 1).unwrap() + Duration::days(n)
    }

    fn sleep_rule(window: u32, min_sleep: f64) -> RuleSet {
        RuleSet {
            window: WindowSize::new(window).unwrap(),
            schema: AttributeSchema::core(),
            rules: vec![Conjunction {
                conjuncts: vec![Feature::new(0, Operator::Ge, min_sleep)],
            }],
            training: None,
        }
    }

    #[test]
    fn detection_is_recorded_once() {
        // client sleeps every other day for a year, daily after day 150
        let sleeps = |n: i64| (0..400).contains(&n) && (n >= 150 || n % 2 == 0);
        let events: Vec<_> = (0..400)
            .filter(|&n| sleeps(n))
            .map(|n| EventRecord::new("a", day(n), EntryType::Sleep))
            .collect();
        let timelines = build_timelines(events);
        let meetings = meeting_schedule(day(0), day(500));
        let rules = sleep_rule(30, 25.0);
        let rep = replay(&timelines, &rules, rules.window, &meetings).unwrap();
        let c = &rep.clients[0];
        // first meeting with >= 25 sleeps in the prior 30 days
        let expect = meetings
            .iter()
            .copied()
            .find(|&d| {
                let end = (d - day(0)).num_days();
                end >= 30 && (end - 30..end).filter(|&n| sleeps(n)).count() >= 25
            })
            .unwrap();
        assert_eq!(meetings.iter().position(|&d| d == expect), Some(5), "sixth meeting");
        assert_eq!(c.detected, Some(expect));
        assert_eq!(rep.meetings.iter().map(|m| m.listed).sum::<usize>(), 1);
        assert!(c.chronic);
        assert_eq!(c.tti_days, Some((expect - day(0)).num_days()));
        assert_eq!((rep.tp, rep.fn_, rep.fp, rep.tn), (1, 0, 0, 0));
    }

    #[test]
    fn quiet_client_is_true_negative() {
        let events = (0..20).map(|n| EventRecord::new("b", day(n * 5), EntryType::Sleep));
        let timelines = build_timelines(events);
        let meetings = meeting_schedule(day(0), day(200));
        let rules = sleep_rule(30, 25.0);
        let rep = replay(&timelines, &rules, rules.window, &meetings).unwrap();
        assert_eq!((rep.tp, rep.fn_, rep.fp, rep.tn), (0, 0, 0, 1));
        assert_eq!(rep.clients[0].tti_days, None);
        assert!(rep.meetings.iter().all(|m| m.listed == 0));
    }

    #[test]
    fn nothing_matches_falls_back_to_baseline() {
        let events = (0..200).map(|n| EventRecord::new("c", day(n), EntryType::Sleep));
        let timelines = build_timelines(events);
        let meetings = meeting_schedule(day(0), day(300));
        let rules = sleep_rule(30, 1000.0);
        let rep = replay(&timelines, &rules, rules.window, &meetings).unwrap();
        assert_eq!((rep.tp, rep.fp), (0, 0));
        assert_eq!(rep.median_tti_days, Some(179.0));
        assert_eq!(baseline_tti(&timelines).unwrap(), 179.0);
    }

    #[test]
    fn window_mismatch() {
        let rules = sleep_rule(90, 1.0);
        assert!(matches!(
            replay(&[], &rules, WindowSize::new(30).unwrap(), &[]),
            Err(EvalError::WindowMismatch { rules: 90, requested: 30 })
        ));
    }

    #[test]
    fn baseline_median_of_two() {
        let mut events = Vec::new();
        // client x: 80 sparse stays then daily; y: daily from day 0
        for n in 0..400 {
            if n < 160 {
                if n % 2 == 0 {
                    events.push(EventRecord::new("x", day(n), EntryType::Sleep));
                }
            } else {
                events.push(EventRecord::new("x", day(n), EntryType::Sleep));
            }
        }
        for n in 0..180 {
            events.push(EventRecord::new("y", day(n), EntryType::Sleep));
        }
        let timelines = build_timelines(events);
        // x reaches 180 stays at day 160 + 99 = 259; y at day 179
        assert_eq!(baseline_tti(&timelines).unwrap(), (259.0 + 179.0) / 2.0);
        assert!(matches!(baseline_tti(&[]), Err(EvalError::NoChronic)));
    }
}
