//! Exhaustive branch-and-bound search for the conjunction of threshold
//! features that maximizes F-beta on a coverage table.
//!
//! The search walks a set-enumeration tree: a node holding features
//! `[i1 < i2 < ... < ik]` only extends with features of index greater than
//! `ik`, so every feature set is visited at most once. A subtree is cut when
//! its optimistic F-beta (the score it would reach if every false positive
//! could be shed without losing a true positive) cannot beat the incumbent.
//!
//! Ties are broken canonically: higher score, then shorter rule, then the
//! lexicographically smallest feature-index sequence. The winner is
//! therefore independent of expansion order and worker count.

use std::cmp::Ordering;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::Bits;
use crate::features::{CoverageTable, Feature};

#[derive(Debug, Error, PartialEq)]
pub enum SearchError {
    #[error("coverage table has no features")]
    NoFeatures,
    #[error("no positive examples to cover")]
    NoPositives,
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error("row mask covers {mask} rows, table has {rows}")]
    MaskLength { mask: usize, rows: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub beta2: f64,
    pub max_rule_len: usize,
    pub max_set_size: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            beta2: 0.25,
            max_rule_len: 2,
            max_set_size: 1,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if !(self.beta2 >= 0.0 && self.beta2.is_finite()) {
            return Err(SearchError::InvalidConfig(format!(
                "beta2 must be finite and >= 0, got {}",
                self.beta2
            )));
        }
        if self.max_rule_len == 0 {
            return Err(SearchError::InvalidConfig("max rule length must be >= 1".into()));
        }
        if self.max_set_size == 0 {
            return Err(SearchError::InvalidConfig("max set size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Confusion counts of a rule over some set of rows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricCounts {
    pub tp: usize,
    pub fp: usize,
    pub pos_total: usize,
    pub neg_total: usize,
}

impl MetricCounts {
    /// `tp / (tp + fp)`, or 0 when nothing is predicted positive.
    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    /// `tp / pos_total`, or 0 when there are no positives.
    pub fn recall(&self) -> f64 {
        if self.pos_total == 0 {
            0.0
        } else {
            self.tp as f64 / self.pos_total as f64
        }
    }
}

/// F-beta with the weight given as beta squared.
pub fn fbeta(counts: &MetricCounts, beta2: f64) -> Result<f64, SearchError> {
    if counts.pos_total == 0 {
        return Err(SearchError::NoPositives);
    }
    Ok(score(counts.tp, counts.fp, counts.pos_total, beta2))
}

/// Best F-beta any specialization of a rule with `tp` true positives could
/// reach: the score with every false positive removed.
pub fn optimistic_bound(tp: usize, pos_total: usize, beta2: f64) -> f64 {
    score(tp, 0, pos_total, beta2)
}

#[inline]
fn score(tp: usize, fp: usize, pos_total: usize, beta2: f64) -> f64 {
    if tp == 0 {
        return 0.0;
    }
    (1.0 + beta2) * tp as f64 / (beta2 * pos_total as f64 + tp as f64 + fp as f64)
}

/// A conjunction found by the search, with its counts on the searched rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    /// Canonical feature indices into the coverage table, ascending.
    pub indices: Vec<usize>,
    pub conjuncts: Vec<Feature>,
    pub counts: MetricCounts,
    pub score: f64,
}

impl Rule {
    /// Rows of `coverage` the rule covers (all conjunct bits set).
    pub fn coverage(&self, coverage: &CoverageTable) -> Bits {
        let mut bits = Bits::ones(coverage.num_rows());
        for &j in &self.indices {
            bits.and_assign(coverage.column(j));
        }
        bits
    }
}

/// Canonical order on candidate rules: `Less` means `a` is preferred.
pub fn compare_candidates(a_score: f64, a: &[usize], b_score: f64, b: &[usize]) -> Ordering {
    b_score
        .total_cmp(&a_score)
        .then(a.len().cmp(&b.len()))
        .then_with(|| a.cmp(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchOptions {
    /// Cut subtrees whose optimistic bound cannot beat the incumbent.
    pub optimistic_pruning: bool,
    /// Skip children whose coverage equals their parent's.
    pub redundancy_pruning: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            optimistic_pruning: true,
            redundancy_pruning: true,
        }
    }
}

impl SearchOptions {
    pub fn exhaustive() -> Self {
        SearchOptions {
            optimistic_pruning: false,
            redundancy_pruning: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    /// Candidate conjunctions whose counts were computed.
    pub evaluated: u64,
    /// Nodes whose children were generated.
    pub expanded: u64,
}

#[derive(Debug, Clone)]
struct Best {
    score: f64,
    indices: Vec<usize>,
    tp: usize,
    fp: usize,
}

impl Best {
    fn offer(slot: &mut Option<Best>, score: f64, indices: &[usize], tp: usize, fp: usize) -> bool {
        let better = match slot {
            None => true,
            Some(b) => compare_candidates(score, indices, b.score, &b.indices) == Ordering::Less,
        };
        if better {
            *slot = Some(Best {
                score,
                indices: indices.to_vec(),
                tp,
                fp,
            });
        }
        better
    }
}

/// Returns (rows covered, positives covered) of `cover & column`.
#[inline]
fn child_counts(cover: &Bits, column: &Bits, labels: &Bits) -> (usize, usize) {
    let mut n = 0usize;
    let mut tp = 0usize;
    for ((c, f), l) in cover.words().iter().zip(column.words()).zip(labels.words()) {
        let x = c & f;
        n += x.count_ones() as usize;
        tp += (x & l).count_ones() as usize;
    }
    (n, tp)
}

struct Walker<'a> {
    coverage: &'a CoverageTable,
    beta2: f64,
    max_len: usize,
    pos_total: usize,
    options: SearchOptions,
    best: Option<Best>,
    stats: SearchStats,
    shared: Option<&'a AtomicU64>,
}

impl Walker<'_> {
    fn shared_score(&self) -> f64 {
        self.shared
            .map_or(0.0, |s| f64::from_bits(s.load(AtomicOrdering::Relaxed)))
    }

    fn publish(&self) {
        if let (Some(shared), Some(best)) = (self.shared, &self.best) {
            shared.fetch_max(best.score.to_bits(), AtomicOrdering::Relaxed);
        }
    }

    /// Whether descendants (length >= `child_len + 1`) of a node with `tp`
    /// true positives could still displace the incumbent.
    fn may_improve(&self, tp: usize, child_len: usize) -> bool {
        if !self.options.optimistic_pruning {
            return true;
        }
        if tp == 0 {
            return false;
        }
        let bound = optimistic_bound(tp, self.pos_total, self.beta2);
        // Scores are non-negative, so their bit patterns order like the values.
        if bound < self.shared_score() {
            return false;
        }
        match &self.best {
            None => true,
            // equal bound can only win the tie by being shorter; an incumbent
            // of the same length as a descendant precedes it lexicographically
            Some(b) => bound > b.score || (bound == b.score && child_len + 1 < b.indices.len()),
        }
    }

    /// Scores the child `prefix + [j]` of a node covering `parent_n` rows.
    /// Returns its true positives, or `None` when it is a redundant
    /// non-root child, which ties its shorter parent forever after.
    fn score_child(
        &mut self,
        prefix: &mut Vec<usize>,
        cover: &Bits,
        parent_n: usize,
        j: usize,
    ) -> Option<(usize, bool)> {
        let column = self.coverage.column(j);
        let (n, tp) = child_counts(cover, column, self.coverage.labels());
        self.stats.evaluated += 1;
        let redundant = self.options.redundancy_pruning && n == parent_n;
        if redundant && !prefix.is_empty() {
            return None;
        }
        prefix.push(j);
        let fp = n - tp;
        let s = score(tp, fp, self.pos_total, self.beta2);
        if Best::offer(&mut self.best, s, prefix, tp, fp) {
            self.publish();
        }
        prefix.pop();
        Some((tp, redundant))
    }

    fn descend(&mut self, prefix: &mut Vec<usize>, cover: &Bits, j: usize, tp: usize, redundant: bool) {
        let depth = prefix.len() + 1;
        if depth < self.max_len && !redundant && self.may_improve(tp, depth) {
            self.stats.expanded += 1;
            let column = self.coverage.column(j);
            let child_cover = cover.and(column);
            let n = child_cover.count_ones();
            prefix.push(j);
            self.expand(prefix, &child_cover, n);
            prefix.pop();
        }
    }

    /// Evaluates and descends into the single child `prefix + [j]`.
    fn visit_child(&mut self, prefix: &mut Vec<usize>, cover: &Bits, parent_n: usize, j: usize) {
        if let Some((tp, redundant)) = self.score_child(prefix, cover, parent_n, j) {
            self.descend(prefix, cover, j, tp, redundant);
        }
    }

    /// Scores every child before descending into any, so the bound is tested
    /// against the strongest incumbent available at this node.
    fn expand(&mut self, prefix: &mut Vec<usize>, cover: &Bits, n: usize) {
        let start = prefix.last().map_or(0, |&l| l + 1);
        let children: Vec<(usize, usize, bool)> = (start..self.coverage.num_features())
            .filter_map(|j| {
                self.score_child(prefix, cover, n, j)
                    .map(|(tp, redundant)| (j, tp, redundant))
            })
            .collect();
        for (j, tp, redundant) in children {
            self.descend(prefix, cover, j, tp, redundant);
        }
    }
}

fn check_inputs(
    coverage: &CoverageTable,
    mask: &Bits,
    config: &SearchConfig,
) -> Result<(usize, usize), SearchError> {
    config.validate()?;
    if mask.len() != coverage.num_rows() {
        return Err(SearchError::MaskLength {
            mask: mask.len(),
            rows: coverage.num_rows(),
        });
    }
    if coverage.num_features() == 0 {
        return Err(SearchError::NoFeatures);
    }
    let pos_total = mask.and_count(coverage.labels());
    if pos_total == 0 {
        return Err(SearchError::NoPositives);
    }
    Ok((pos_total, mask.count_ones() - pos_total))
}

fn finish(
    coverage: &CoverageTable,
    best: Best,
    pos_total: usize,
    neg_total: usize,
) -> Rule {
    Rule {
        conjuncts: best.indices.iter().map(|&j| coverage.features()[j]).collect(),
        indices: best.indices,
        counts: MetricCounts {
            tp: best.tp,
            fp: best.fp,
            pos_total,
            neg_total,
        },
        score: best.score,
    }
}

/// Best conjunction of 1..=`max_rule_len` features over all rows.
pub fn search(coverage: &CoverageTable, config: &SearchConfig) -> Result<Rule, SearchError> {
    let mask = Bits::ones(coverage.num_rows());
    search_in(coverage, &mask, config, SearchOptions::default()).map(|(r, _)| r)
}

/// Sequential search restricted to the rows set in `mask`.
pub fn search_in(
    coverage: &CoverageTable,
    mask: &Bits,
    config: &SearchConfig,
    options: SearchOptions,
) -> Result<(Rule, SearchStats), SearchError> {
    let (pos_total, neg_total) = check_inputs(coverage, mask, config)?;
    let mut walker = Walker {
        coverage,
        beta2: config.beta2,
        max_len: config.max_rule_len,
        pos_total,
        options,
        best: None,
        stats: SearchStats::default(),
        shared: None,
    };
    walker.expand(&mut Vec::new(), mask, mask.count_ones());
    let best = walker.best.expect("at least one feature was evaluated");
    Ok((finish(coverage, best, pos_total, neg_total), walker.stats))
}

/// Parallel search: root subtrees run on the rayon pool and share the best
/// score seen so far. Returns the same rule as [`search_in`].
pub fn search_in_par(
    coverage: &CoverageTable,
    mask: &Bits,
    config: &SearchConfig,
    options: SearchOptions,
) -> Result<Rule, SearchError> {
    let (pos_total, neg_total) = check_inputs(coverage, mask, config)?;
    let shared = AtomicU64::new(0f64.to_bits());
    let n = mask.count_ones();
    let best = (0..coverage.num_features())
        .into_par_iter()
        .filter_map(|j| {
            let mut walker = Walker {
                coverage,
                beta2: config.beta2,
                max_len: config.max_rule_len,
                pos_total,
                options,
                best: None,
                stats: SearchStats::default(),
                shared: Some(&shared),
            };
            walker.visit_child(&mut Vec::new(), mask, n, j);
            walker.best
        })
        .min_by(|a, b| compare_candidates(a.score, &a.indices, b.score, &b.indices))
        .expect("at least one feature was evaluated");
    Ok(finish(coverage, best, pos_total, neg_total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Operator;

    fn counts(tp: usize, fp: usize, pos: usize) -> MetricCounts {
        MetricCounts {
            tp,
            fp,
            pos_total: pos,
            neg_total: 100,
        }
    }

    fn table(cols: &[&str], labels: &str) -> CoverageTable {
        let parse = |s: &str| Bits::from_fn(s.len(), |i| s.as_bytes()[i] == b'1');
        let features = (0..cols.len())
            .map(|j| Feature::new(0, Operator::Ge, j as f64 + 0.5))
            .collect();
        CoverageTable::new(features, cols.iter().map(|c| parse(c)).collect(), parse(labels)).unwrap()
    }

    #[test]
    fn fbeta_examples() {
        for b in [0.0, 0.25, 1.0, 100.0] {
            assert_eq!(fbeta(&counts(7, 0, 7), b).unwrap(), 1.0);
            assert_eq!(fbeta(&counts(0, 3, 7), b).unwrap(), 0.0);
        }
        let f = fbeta(&counts(1, 0, 2), 1.0).unwrap();
        assert!((f - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(fbeta(&counts(0, 0, 0), 1.0), Err(SearchError::NoPositives));
    }

    #[test]
    fn bound_examples() {
        assert_eq!(optimistic_bound(5, 5, 0.25), 1.0);
        assert_eq!(optimistic_bound(0, 5, 0.25), 0.0);
    }

    #[test]
    fn perfect_separator_wins() {
        let cov = table(&["110000", "111100", "001111"], "110000");
        let rule = search(&cov, &SearchConfig::default()).unwrap();
        assert_eq!(rule.indices, vec![0]);
        assert_eq!(rule.score, 1.0);
    }

    #[test]
    fn conjunction_beats_single_features() {
        // positives are rows 0,1; f0 covers 0-3, f1 covers 0,1,4,5
        let cov = table(&["111100", "110011"], "110000");
        let rule = search(&cov, &SearchConfig::default()).unwrap();
        assert_eq!(rule.indices, vec![0, 1]);
        assert_eq!(rule.score, 1.0);
        let short = search(
            &cov,
            &SearchConfig {
                max_rule_len: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(short.indices, vec![0]);
    }

    #[test]
    fn ties_prefer_shorter_then_lexicographic() {
        // f0 == f2 coverage; f1 covers everything
        let cov = table(&["1100", "1111", "1100"], "1000");
        let rule = search(&cov, &SearchConfig::default()).unwrap();
        assert_eq!(rule.indices, vec![0]);
    }

    #[test]
    fn all_covering_feature_can_win() {
        // with a huge beta2 recall dominates: the always-true feature wins
        let cov = table(&["1111", "1000"], "1100");
        let cfg = SearchConfig {
            beta2: 1e6,
            ..Default::default()
        };
        let rule = search(&cov, &cfg).unwrap();
        assert_eq!(rule.indices, vec![0]);
        assert_eq!(rule.counts.tp, 2);
    }

    #[test]
    fn errors() {
        let cov = table(&["10"], "00");
        assert_eq!(search(&cov, &SearchConfig::default()), Err(SearchError::NoPositives));
        let empty = CoverageTable::new(vec![], vec![], Bits::ones(2)).unwrap();
        assert_eq!(search(&empty, &SearchConfig::default()), Err(SearchError::NoFeatures));
        let bad = SearchConfig {
            max_rule_len: 0,
            ..Default::default()
        };
        assert!(matches!(
            search(&table(&["1"], "1"), &bad),
            Err(SearchError::InvalidConfig(_))
        ));
    }

    #[test]
    fn masked_search_ignores_hidden_rows() {
        let cov = table(&["1100", "0011"], "1010");
        let mask = Bits::from_fn(4, |i| i >= 2);
        let (rule, _) = search_in(&cov, &mask, &SearchConfig::default(), SearchOptions::default())
            .unwrap();
        assert_eq!(rule.indices, vec![1]);
        assert_eq!(rule.counts, MetricCounts { tp: 1, fp: 1, pos_total: 1, neg_total: 1 });
    }
}
